#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

// Data-parallel inner loops of the engine. Each kernel has a portable scalar
// reference and an AVX2/FMA variant chosen at runtime. The variants are
// bitwise-equivalent: every output element is produced by the same sequence
// of IEEE operations (vector lanes never reassociate a reduction), so a run
// gives identical bits whichever ISA executes it.
namespace sparselab::kernels {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);

struct KernelTable {
    // C[m x n] += A[m x k] * B[k x n], all row-major with leading dimensions.
    // Each C element accumulates fma(a[i,p], b[p,j], c) for p = 0..k-1 in order.
    void (*gemm_acc)(std::size_t m, std::size_t n, std::size_t k,
                     const float* a, std::size_t lda,
                     const float* b, std::size_t ldb,
                     float* c, std::size_t ldc);
    // y = x > 0 ? x : 0
    void (*relu_forward)(const float* x, float* y, std::size_t n);
    // dx = y > 0 ? dy : 0, y being the forward output
    void (*relu_backward)(const float* y, const float* dy, float* dx, std::size_t n);
    // y = x + y
    void (*add)(const float* x, float* y, std::size_t n);
    // y = fma(alpha, x, y)
    void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
    // w = keep ? fma(-lr, g, w) : +0
    void (*masked_sgd)(float lr, const float* g, const std::uint8_t* keep, float* w, std::size_t n);
    // w = keep ? w : +0
    void (*apply_mask)(const std::uint8_t* keep, float* w, std::size_t n);
};

const KernelTable& scalar_table();
// Null when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool isa_supported(Isa isa);
// Best supported ISA, unless SPARSELAB_ISA=scalar|avx2 forces one.
Isa detect_isa();
Isa active_isa();
// Throws UnsupportedError if the CPU cannot run it.
void set_active_isa(Isa isa);
const KernelTable& table(Isa isa);
const KernelTable& active();

// Reductions longer than this are split into blocks whose partial results are
// combined pairwise.
inline constexpr std::size_t kPairwiseBlock = 4096;

// gemm_acc through the active table, with k > kPairwiseBlock handled by
// blockwise partial products summed pairwise.
void gemm(std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda,
          const float* b, std::size_t ldb,
          float* c, std::size_t ldc);

// Sum of a sequence: sequential within blocks of kPairwiseBlock, blocks
// combined pairwise.
float sum(std::span<const float> x);

// Transpose rows x cols (row-major, leading dim ld_src) into dst (cols x rows).
void transpose(const float* src, std::size_t rows, std::size_t cols, std::size_t ld_src,
               float* dst, std::size_t ld_dst);

} // namespace sparselab::kernels
