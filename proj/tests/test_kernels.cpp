#include "sparselab/kernels.hpp"
#include "sparselab/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

using namespace sparselab;
namespace kn = sparselab::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed, StreamId::shuffle);
    std::vector<float> v(n);
    for (float& x : v) {
        x = rng.uniform(-1.0f, 1.0f);
    }
    return v;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

} // namespace

TEST_CASE("scalar gemm matches a double-precision product") {
    const std::size_t m = 7, n = 13, k = 29;
    const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
    std::vector<float> c(m * n, 0.5f);
    kn::scalar_table().gemm_acc(m, n, k, a.data(), k, b.data(), n, c.data(), n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.5;
            for (std::size_t p = 0; p < k; ++p) {
                s += double(a[i * k + p]) * b[p * n + j];
            }
            CHECK(std::fabs(c[i * n + j] - s) < 1e-5);
        }
    }
}

TEST_CASE("avx2 kernels are bitwise identical to scalar") {
    if (!kn::isa_supported(kn::Isa::avx2)) {
        MESSAGE("avx2 not available; skipping");
        return;
    }
    const auto& s = kn::table(kn::Isa::scalar);
    const auto& v = kn::table(kn::Isa::avx2);
    const std::size_t dims[] = {1, 2, 3, 5, 6, 7, 8, 9, 15, 16, 17, 23, 31, 33, 48, 121, 130};
    std::uint64_t seed = 10;
    for (std::size_t m : dims) {
        for (std::size_t n : dims) {
            for (std::size_t k : {std::size_t{1}, std::size_t{4}, std::size_t{9}, std::size_t{54}}) {
                const std::size_t lda = k + 3, ldb = n + 1, ldc = n + 2;
                const auto a = random_vec(m * lda, ++seed), b = random_vec(k * ldb, ++seed);
                auto c1 = random_vec(m * ldc, ++seed);
                auto c2 = c1;
                s.gemm_acc(m, n, k, a.data(), lda, b.data(), ldb, c1.data(), ldc);
                v.gemm_acc(m, n, k, a.data(), lda, b.data(), ldb, c2.data(), ldc);
                CAPTURE(m);
                CAPTURE(n);
                CAPTURE(k);
                REQUIRE(same_bits(c1, c2));
            }
        }
    }
    for (std::size_t n : {std::size_t{1}, std::size_t{7}, std::size_t{8}, std::size_t{33}, std::size_t{1000}}) {
        CAPTURE(n);
        auto x = random_vec(n, ++seed);
        x[0] = -0.0f;
        const auto y0 = random_vec(n, ++seed);
        std::vector<float> r1(n), r2(n);
        s.relu_forward(x.data(), r1.data(), n);
        v.relu_forward(x.data(), r2.data(), n);
        CHECK(same_bits(r1, r2));
        s.relu_backward(x.data(), y0.data(), r1.data(), n);
        v.relu_backward(x.data(), y0.data(), r2.data(), n);
        CHECK(same_bits(r1, r2));
        auto a1 = y0, a2 = y0;
        s.add(x.data(), a1.data(), n);
        v.add(x.data(), a2.data(), n);
        CHECK(same_bits(a1, a2));
        a1 = y0;
        a2 = y0;
        s.axpy(-0.01f, x.data(), a1.data(), n);
        v.axpy(-0.01f, x.data(), a2.data(), n);
        CHECK(same_bits(a1, a2));
        std::vector<std::uint8_t> keep(n);
        for (std::size_t i = 0; i < n; ++i) {
            keep[i] = static_cast<std::uint8_t>(i % 3 != 0);
        }
        a1 = y0;
        a2 = y0;
        s.masked_sgd(0.01f, x.data(), keep.data(), a1.data(), n);
        v.masked_sgd(0.01f, x.data(), keep.data(), a2.data(), n);
        CHECK(same_bits(a1, a2));
        a1 = x;
        a2 = x;
        s.apply_mask(keep.data(), a1.data(), n);
        v.apply_mask(keep.data(), a2.data(), n);
        CHECK(same_bits(a1, a2));
    }
}

TEST_CASE("masked kernels write positive zero") {
    for (auto isa : {kn::Isa::scalar, kn::Isa::avx2}) {
        if (!kn::isa_supported(isa)) {
            continue;
        }
        const auto& t = kn::table(isa);
        std::vector<float> w(11, -0.25f), g(11, 1.0f);
        std::vector<std::uint8_t> keep(11, 0);
        t.masked_sgd(0.1f, g.data(), keep.data(), w.data(), w.size());
        for (float x : w) {
            CHECK(x == 0.0f);
            CHECK_FALSE(std::signbit(x));
        }
    }
}

TEST_CASE("long reductions are blocked pairwise") {
    const std::size_t k = 3 * kn::kPairwiseBlock + 17;
    const auto a = random_vec(k, 5), b = random_vec(k, 6);
    float c = 0.0f;
    kn::gemm(1, 1, k, a.data(), k, b.data(), 1, &c, 1);
    double ref = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        ref += double(a[i]) * b[i];
    }
    CHECK(std::fabs(c - ref) < 1e-3);

    std::vector<float> ones(k, 1.0f);
    CHECK(kn::sum(ones) == static_cast<float>(k));
}

TEST_CASE("transpose") {
    const float src[6] = {1, 2, 3, 4, 5, 6};
    float dst[6];
    kn::transpose(src, 2, 3, 3, dst, 2);
    const float want[6] = {1, 4, 2, 5, 3, 6};
    CHECK(std::memcmp(dst, want, sizeof want) == 0);
}
