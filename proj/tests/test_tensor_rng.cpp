#include "sparselab/error.hpp"
#include "sparselab/rng.hpp"
#include "sparselab/tensor.hpp"

#include <doctest.h>

using namespace sparselab;

TEST_CASE("tensor keeps data length equal to its shape") {
    Tensor t({2, 3, 4}, 1.5f);
    CHECK(t.size() == 24);
    t.reshape({6, 4});
    CHECK(t.shape() == Shape{6, 4});
    CHECK_THROWS_AS(t.reshape({5, 5}), DimensionError);
    Tensor z({2});
    Tensor nz({2}, {0.0f, -0.0f});
    CHECK(z == nz);
    CHECK_FALSE(bitwise_equal(z, nz));
}

TEST_CASE("rng streams are reproducible and independent") {
    RngStream a(42, StreamId::init), b(42, StreamId::init), c(42, StreamId::shuffle);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs |= x != c.next_u64();
    }
    CHECK(differs);
    for (int i = 0; i < 1000; ++i) {
        const float u = a.uniform01();
        CHECK(u >= 0.0f);
        CHECK(u < 1.0f);
        CHECK(a.below(7) < 7);
    }
}

TEST_CASE("rng state round trip resumes the sequence") {
    RngStream a(3, StreamId::prune_random);
    a.next_u64();
    const std::string s = a.state();
    const auto expected = a.next_u64();
    RngStream b(3, StreamId::prune_random);
    b.restore(s);
    CHECK(b.next_u64() == expected);
    CHECK_THROWS_AS(b.restore("garbage"), PersistenceError);
}
