#include "sparselab/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace sparselab::kernels {
namespace {

constexpr std::size_t kRows = 6;

inline __m256i tail_mask(std::size_t count) {
    alignas(32) static constexpr std::int32_t lanes[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                                           0, 0, 0, 0, 0, 0, 0, 0};
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(lanes + 8 - count));
}

template <std::size_t R>
inline void tile16(std::size_t k, const float* a, std::size_t lda, const float* b, std::size_t ldb,
                   float* c, std::size_t ldc) {
    __m256 lo[R];
    __m256 hi[R];
    for (std::size_t r = 0; r < R; ++r) {
        lo[r] = _mm256_loadu_ps(c + r * ldc);
        hi[r] = _mm256_loadu_ps(c + r * ldc + 8);
    }
    for (std::size_t p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
        const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
        for (std::size_t r = 0; r < R; ++r) {
            const __m256 av = _mm256_broadcast_ss(a + r * lda + p);
            lo[r] = _mm256_fmadd_ps(av, b0, lo[r]);
            hi[r] = _mm256_fmadd_ps(av, b1, hi[r]);
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        _mm256_storeu_ps(c + r * ldc, lo[r]);
        _mm256_storeu_ps(c + r * ldc + 8, hi[r]);
    }
}

template <std::size_t R>
inline void tile8(std::size_t k, const float* a, std::size_t lda, const float* b, std::size_t ldb,
                  float* c, std::size_t ldc, __m256i mask) {
    __m256 acc[R];
    for (std::size_t r = 0; r < R; ++r) {
        acc[r] = _mm256_maskload_ps(c + r * ldc, mask);
    }
    for (std::size_t p = 0; p < k; ++p) {
        const __m256 bv = _mm256_maskload_ps(b + p * ldb, mask);
        for (std::size_t r = 0; r < R; ++r) {
            acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(a + r * lda + p), bv, acc[r]);
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        _mm256_maskstore_ps(c + r * ldc, mask, acc[r]);
    }
}

template <std::size_t R>
void row_block(std::size_t n, std::size_t k, const float* a, std::size_t lda,
               const float* b, std::size_t ldb, float* c, std::size_t ldc) {
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
        tile16<R>(k, a, lda, b + j, ldb, c + j, ldc);
    }
    for (; j < n; j += 8) {
        const std::size_t width = n - j < 8 ? n - j : 8;
        tile8<R>(k, a, lda, b + j, ldb, c + j, ldc, tail_mask(width));
    }
}

void gemm_acc_avx2(std::size_t m, std::size_t n, std::size_t k,
                   const float* a, std::size_t lda,
                   const float* b, std::size_t ldb,
                   float* c, std::size_t ldc) {
    std::size_t i = 0;
    for (; i + kRows <= m; i += kRows) {
        row_block<kRows>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
    }
    const float* ai = a + i * lda;
    float* ci = c + i * ldc;
    switch (m - i) {
    case 5: row_block<5>(n, k, ai, lda, b, ldb, ci, ldc); break;
    case 4: row_block<4>(n, k, ai, lda, b, ldb, ci, ldc); break;
    case 3: row_block<3>(n, k, ai, lda, b, ldb, ci, ldc); break;
    case 2: row_block<2>(n, k, ai, lda, b, ldb, ci, ldc); break;
    case 1: row_block<1>(n, k, ai, lda, b, ldb, ci, ldc); break;
    default: break;
    }
}

void relu_forward_avx2(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        _mm256_storeu_ps(y + i, _mm256_and_ps(v, _mm256_cmp_ps(v, zero, _CMP_GT_OQ)));
    }
    for (; i < n; ++i) {
        y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    }
}

void relu_backward_avx2(const float* y, const float* dy, float* dx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gate = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(dx + i, _mm256_and_ps(_mm256_loadu_ps(dy + i), gate));
    }
    for (; i < n; ++i) {
        dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
    }
}

void add_avx2(const float* x, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) {
        y[i] = x[i] + y[i];
    }
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) {
        y[i] = std::fma(alpha, x[i], y[i]);
    }
}

// Expands 8 mask bytes into a lane mask that is all-ones where the byte is nonzero.
inline __m256 keep_lanes(const std::uint8_t* keep) {
    const __m128i bytes = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(keep));
    const __m256i wide = _mm256_cvtepu8_epi32(bytes);
    const __m256i dead = _mm256_cmpeq_epi32(wide, _mm256_setzero_si256());
    return _mm256_castsi256_ps(_mm256_xor_si256(dead, _mm256_set1_epi32(-1)));
}

void masked_sgd_avx2(float lr, const float* g, const std::uint8_t* keep, float* w, std::size_t n) {
    const __m256 neg_lr = _mm256_set1_ps(-lr);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 updated = _mm256_fmadd_ps(neg_lr, _mm256_loadu_ps(g + i), _mm256_loadu_ps(w + i));
        _mm256_storeu_ps(w + i, _mm256_and_ps(updated, keep_lanes(keep + i)));
    }
    for (; i < n; ++i) {
        w[i] = keep[i] != 0 ? std::fma(-lr, g[i], w[i]) : 0.0f;
    }
}

void apply_mask_avx2(const std::uint8_t* keep, float* w, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(w + i, _mm256_and_ps(_mm256_loadu_ps(w + i), keep_lanes(keep + i)));
    }
    for (; i < n; ++i) {
        w[i] = keep[i] != 0 ? w[i] : 0.0f;
    }
}

constexpr KernelTable kAvx2{
    gemm_acc_avx2,
    relu_forward_avx2,
    relu_backward_avx2,
    add_avx2,
    axpy_avx2,
    masked_sgd_avx2,
    apply_mask_avx2,
};

} // namespace

const KernelTable* avx2_table() { return &kAvx2; }

} // namespace sparselab::kernels
