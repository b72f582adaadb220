#include "sparselab/kernels.hpp"

#include <cmath>

namespace sparselab::kernels {
namespace {

void gemm_acc_scalar(std::size_t m, std::size_t n, std::size_t k,
                     const float* a, std::size_t lda,
                     const float* b, std::size_t ldb,
                     float* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * lda;
        float* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) {
            float acc = crow[j];
            for (std::size_t p = 0; p < k; ++p) {
                acc = std::fma(arow[p], b[p * ldb + j], acc);
            }
            crow[j] = acc;
        }
    }
}

void relu_forward_scalar(const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    }
}

void relu_backward_scalar(const float* y, const float* dy, float* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
    }
}

void add_scalar(const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = x[i] + y[i];
    }
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::fma(alpha, x[i], y[i]);
    }
}

void masked_sgd_scalar(float lr, const float* g, const std::uint8_t* keep, float* w, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = keep[i] != 0 ? std::fma(-lr, g[i], w[i]) : 0.0f;
    }
}

void apply_mask_scalar(const std::uint8_t* keep, float* w, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = keep[i] != 0 ? w[i] : 0.0f;
    }
}

constexpr KernelTable kScalar{
    gemm_acc_scalar,
    relu_forward_scalar,
    relu_backward_scalar,
    add_scalar,
    axpy_scalar,
    masked_sgd_scalar,
    apply_mask_scalar,
};

} // namespace

const KernelTable& scalar_table() { return kScalar; }

} // namespace sparselab::kernels
