#include "sparselab/error.hpp"
#include "sparselab/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string_view>
#include <vector>

namespace sparselab::kernels {

#ifndef SPARSELAB_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

namespace {

std::atomic<Isa>& active_slot() {
    static std::atomic<Isa> slot{detect_isa()};
    return slot;
}

// Sums equally-sized partial buffers in a balanced binary tree, in place;
// the result lands in parts[0].
void pairwise_combine(std::vector<std::vector<float>>& parts, const KernelTable& t) {
    for (std::size_t stride = 1; stride < parts.size(); stride *= 2) {
        for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride) {
            t.add(parts[i + stride].data(), parts[i].data(), parts[i].size());
        }
    }
}

} // namespace

const char* isa_name(Isa isa) {
    switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool isa_supported(Isa isa) {
    switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(SPARSELAB_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
        return avx2_table() != nullptr && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    }
    return false;
}

Isa detect_isa() {
    if (const char* forced = std::getenv("SPARSELAB_ISA")) {
        const std::string_view name{forced};
        if (name == "scalar") {
            return Isa::scalar;
        }
        if (name == "avx2" && isa_supported(Isa::avx2)) {
            return Isa::avx2;
        }
    }
    return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
    if (!isa_supported(isa)) {
        throw UnsupportedError(std::string("kernel ISA not supported on this CPU: ") + isa_name(isa));
    }
    active_slot().store(isa, std::memory_order_relaxed);
}

const KernelTable& table(Isa isa) {
    if (!isa_supported(isa)) {
        throw UnsupportedError(std::string("kernel ISA not supported on this CPU: ") + isa_name(isa));
    }
    return isa == Isa::avx2 ? *avx2_table() : scalar_table();
}

const KernelTable& active() { return table(active_isa()); }

void gemm(std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda,
          const float* b, std::size_t ldb,
          float* c, std::size_t ldc) {
    const KernelTable& t = active();
    if (k <= kPairwiseBlock) {
        t.gemm_acc(m, n, k, a, lda, b, ldb, c, ldc);
        return;
    }
    const std::size_t blocks = (k + kPairwiseBlock - 1) / kPairwiseBlock;
    std::vector<std::vector<float>> parts(blocks, std::vector<float>(m * n, 0.0f));
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::size_t p0 = blk * kPairwiseBlock;
        const std::size_t len = std::min(kPairwiseBlock, k - p0);
        t.gemm_acc(m, n, len, a + p0, lda, b + p0 * ldb, ldb, parts[blk].data(), n);
    }
    pairwise_combine(parts, t);
    for (std::size_t i = 0; i < m; ++i) {
        t.add(parts[0].data() + i * n, c + i * ldc, n);
    }
}

float sum(std::span<const float> x) {
    if (x.size() <= kPairwiseBlock) {
        float acc = 0.0f;
        for (float v : x) {
            acc += v;
        }
        return acc;
    }
    const std::size_t half = (x.size() / kPairwiseBlock + 1) / 2 * kPairwiseBlock;
    return sum(x.first(half)) + sum(x.subspan(half));
}

void transpose(const float* src, std::size_t rows, std::size_t cols, std::size_t ld_src,
               float* dst, std::size_t ld_dst) {
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            dst[j * ld_dst + i] = src[i * ld_src + j];
        }
    }
}

} // namespace sparselab::kernels
