#include "sparselab/error.hpp"
#include "sparselab/pruning.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace sparselab;

namespace {

Network trained_lenet(std::uint64_t seed) {
    RngStream rng(seed, StreamId::init);
    return init_network(lenet(), rng);
}

std::size_t alive_slices(const Mask& m) {
    std::set<std::size_t> s;
    for (std::size_t j = 0; j < m.bits.size(); ++j) {
        if (m.bits[j]) {
            s.insert(slice_of(m.shape, j));
        }
    }
    return s.size();
}

bool slices_atomic(const Mask& m) {
    std::vector<int> state(slice_count(m.shape), -1);
    for (std::size_t j = 0; j < m.bits.size(); ++j) {
        int& s = state[slice_of(m.shape, j)];
        if (s == -1) {
            s = m.bits[j];
        } else if (s != m.bits[j]) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("unstructured scores") {
    RngStream rng(0, StreamId::prune_random);
    const Tensor w({3}, {-0.5f, 0.1f, 0.0f});
    const Tensor s = score_unstructured(w, Criterion::l1, rng);
    CHECK(s[0] == 0.5f);
    CHECK(s[1] == 0.1f);
    CHECK(s[2] == 0.0f);
    RngStream a(4, StreamId::prune_random), b(4, StreamId::prune_random);
    CHECK(bitwise_equal(score_unstructured(w, Criterion::random, a), score_unstructured(w, Criterion::random, b)));
}

TEST_CASE("structured scores per input slice") {
    RngStream rng(0, StreamId::prune_random);
    // two output channels, one input slice holding {1, -2}
    const Tensor w({2, 1, 1, 1}, {1.0f, -2.0f});
    CHECK(score_structured(w, Criterion::l1, rng)[0] == doctest::Approx(3.0));
    CHECK(score_structured(w, Criterion::l2, rng)[0] == doctest::Approx(2.23607).epsilon(1e-5));
    CHECK(score_structured(w, Criterion::linf, rng)[0] == doctest::Approx(2.0));
    CHECK(slice_count(Shape{120, 400}) == 400);
    CHECK(slice_count(Shape{16, 6, 3, 3}) == 6);
    CHECK(slice_of(Shape{16, 6, 3, 3}, 9 * 7) == 1);
    CHECK(slice_of(Shape{120, 400}, 401) == 1);
}

TEST_CASE("rounding rule") {
    CHECK(prune_count(0.2, 100) == 20);
    CHECK(prune_count(0.2, 7) == 1);
    CHECK(prune_count(0.2, 2) == 0);
    CHECK(prune_count(0.5, 3) == 2);
}

TEST_CASE("select orders by score then layer and index") {
    std::vector<Candidate> c = {{0.3, 0, 0}, {0.1, 1, 5}, {0.1, 0, 9}, {0.2, 0, 1}, {0.9, 1, 0}};
    const auto low = select(c, 0.4, Direction::prune_low);
    REQUIRE(low.size() == 2);
    CHECK(low[0].layer == 0);
    CHECK(low[0].index == 9);
    CHECK(low[1].layer == 1);
    const auto high = select(c, 0.2, Direction::prune_high);
    REQUIRE(high.size() == 1);
    CHECK(high[0].score == 0.9);

    std::vector<Candidate> neg = c;
    for (auto& x : neg) {
        x.score = -x.score;
    }
    const auto a = select(c, 0.6, Direction::prune_high);
    const auto b = select(neg, 0.6, Direction::prune_low);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].layer == b[i].layer);
        CHECK(a[i].index == b[i].index);
    }
}

TEST_CASE("identical slices: lower index goes first") {
    Network net = trained_lenet(0);
    Tensor& w = net.param("fc3").weight;
    w.fill(1.0f);
    MaskSet m = MaskSet::all_ones(net.arch);
    RngStream rng(0, StreamId::prune_random);
    const MaskSet out = prune_step(net, m, PruneSpec{PruneMethod::l1_structured}, rng);
    const Mask& fc3 = out.by_name("fc3");
    // 84 columns, round(16.8) = 17 removed: columns 0..16
    for (std::size_t o = 0; o < 10; ++o) {
        for (std::size_t c = 0; c < 84; ++c) {
            CHECK(fc3.bits[o * 84 + c] == (c >= 17 ? 1 : 0));
        }
    }
}

TEST_CASE("local unstructured counts, nesting and exclusion of pruned weights") {
    Network net = trained_lenet(1);
    MaskSet masks = MaskSet::all_ones(net.arch);
    RngStream rng(1, StreamId::prune_random);
    for (auto method : {PruneMethod::l1_unstructured, PruneMethod::random_unstructured}) {
        MaskSet cur = masks;
        for (int it = 0; it < 4; ++it) {
            apply_masks(net, cur);
            const MaskSet next = prune_step(net, cur, PruneSpec{method}, rng);
            CHECK(nests_within(next, cur));
            CHECK(next.iteration == cur.iteration + 1);
            for (std::size_t l = 0; l < cur.masks.size(); ++l) {
                const std::size_t remaining = cur.masks[l].kept();
                CHECK(remaining - next.masks[l].kept() == prune_count(0.2, remaining));
            }
            cur = next;
        }
    }
}

TEST_CASE("twenty local iterations follow the compounded rounding rule") {
    Network net = trained_lenet(2);
    MaskSet cur = MaskSet::all_ones(net.arch);
    RngStream rng(2, StreamId::prune_random);
    for (int it = 0; it < 20; ++it) {
        cur = prune_step(net, cur, PruneSpec{PruneMethod::l1_unstructured}, rng);
    }
    // independent integer recurrence: remove floor(r/5 + 1/2) each step
    std::size_t r = 48000;
    for (int it = 0; it < 20; ++it) {
        r -= (2 * r + 5) / 10;
    }
    const double kept = static_cast<double>(cur.by_name("fc1").kept()) / 48000.0;
    CHECK(cur.by_name("fc1").kept() == r);
    CHECK(std::fabs(kept - std::pow(0.8, 20)) / std::pow(0.8, 20) < 0.01);
}

TEST_CASE("structured pruning is slice-atomic and compounds 400 -> 320 -> 256") {
    Network net = trained_lenet(3);
    MaskSet cur = MaskSet::all_ones(net.arch);
    RngStream rng(3, StreamId::prune_random);
    const std::size_t expect[] = {320, 256};
    for (auto method : {PruneMethod::l1_structured, PruneMethod::l2_structured, PruneMethod::linf_structured,
                        PruneMethod::random_structured}) {
        cur = MaskSet::all_ones(net.arch);
        for (int it = 0; it < 2; ++it) {
            const MaskSet next = prune_step(net, cur, PruneSpec{method}, rng);
            CHECK(nests_within(next, cur));
            for (const auto& m : next.masks) {
                CHECK(slices_atomic(m));
            }
            CHECK(alive_slices(next.by_name("fc1")) == expect[it]);
            // conv1 has a single input slice and stays frozen
            CHECK(next.by_name("conv1").pruned() == 0);
            cur = next;
        }
    }
}

TEST_CASE("a structured layer keeps its last slice") {
    Network net = trained_lenet(4);
    MaskSet cur = MaskSet::all_ones(net.arch);
    RngStream rng(4, StreamId::prune_random);
    for (int it = 0; it < 40; ++it) {
        cur = prune_step(net, cur, PruneSpec{PruneMethod::l1_structured, Scope::local, Direction::prune_low, 0.5}, rng);
    }
    for (const auto& m : cur.masks) {
        CHECK(alive_slices(m) == 1);
    }
}

TEST_CASE("hybrid and fc_only dispatch") {
    Network net = trained_lenet(5);
    RngStream rng(5, StreamId::prune_random);
    MaskSet cur = MaskSet::all_ones(net.arch);
    for (int it = 0; it < 3; ++it) {
        cur = prune_step(net, cur, PruneSpec{PruneMethod::fc_only}, rng);
        CHECK(cur.by_name("conv1").pruned() == 0);
        CHECK(cur.by_name("conv2").pruned() == 0);
        CHECK(cur.by_name("fc1").pruned() > 0);
    }
    cur = prune_step(net, MaskSet::all_ones(net.arch), PruneSpec{PruneMethod::hybrid}, rng);
    CHECK(slices_atomic(cur.by_name("conv2")));
    CHECK(alive_slices(cur.by_name("conv2")) == 5);
    CHECK(cur.by_name("fc1").pruned() == 9600);
    CHECK(alive_slices(cur.by_name("fc1")) == 400);
}

TEST_CASE("global scope pools layers that share a rule") {
    Network net = trained_lenet(6);
    RngStream rng(6, StreamId::prune_random);
    const MaskSet masks = MaskSet::all_ones(net.arch);
    const MaskSet g = prune_step(net, masks, PruneSpec{PruneMethod::l1_unstructured, Scope::global}, rng);
    CHECK(g.total() - g.total_kept() == prune_count(0.2, masks.total()));
    // the pooled threshold: every pruned |w| <= every kept |w|
    float max_pruned = 0.0f, min_kept = 1e9f;
    for (std::size_t l = 0; l < g.masks.size(); ++l) {
        for (std::size_t j = 0; j < g.masks[l].size(); ++j) {
            const float a = std::fabs(net.params[l].weight[j]);
            if (g.masks[l].bits[j]) {
                min_kept = std::min(min_kept, a);
            } else {
                max_pruned = std::max(max_pruned, a);
            }
        }
    }
    CHECK(max_pruned <= min_kept);

    const MaskSet h = prune_step(net, masks, PruneSpec{PruneMethod::hybrid, Scope::global}, rng);
    std::size_t linear_pruned = 0, linear_total = 0;
    for (const auto& name : {"fc1", "fc2", "fc3"}) {
        linear_pruned += h.by_name(name).pruned();
        linear_total += h.by_name(name).size();
    }
    CHECK(linear_pruned == prune_count(0.2, linear_total));
    CHECK(slices_atomic(h.by_name("conv2")));
}

TEST_CASE("prune_high removes the largest magnitudes") {
    Network net = trained_lenet(7);
    RngStream rng(7, StreamId::prune_random);
    const MaskSet m = prune_step(net, MaskSet::all_ones(net.arch),
                                 PruneSpec{PruneMethod::l1_unstructured, Scope::local, Direction::prune_high}, rng);
    const Mask& fc2 = m.by_name("fc2");
    float max_kept = 0.0f, min_pruned = 1e9f;
    for (std::size_t j = 0; j < fc2.size(); ++j) {
        const float a = std::fabs(net.param("fc2").weight[j]);
        if (fc2.bits[j]) {
            max_kept = std::max(max_kept, a);
        } else {
            min_pruned = std::min(min_pruned, a);
        }
    }
    CHECK(max_kept <= min_pruned);
}

TEST_CASE("random pruning reproduces under a fixed seed") {
    Network net = trained_lenet(8);
    RngStream a(9, StreamId::prune_random), b(9, StreamId::prune_random);
    const MaskSet ones = MaskSet::all_ones(net.arch);
    for (auto method : {PruneMethod::random_unstructured, PruneMethod::random_structured}) {
        CHECK(prune_step(net, ones, PruneSpec{method}, a) == prune_step(net, ones, PruneSpec{method}, b));
    }
}

TEST_CASE("method names round trip and bad fractions are rejected") {
    for (auto m : {PruneMethod::l1_unstructured, PruneMethod::random_unstructured, PruneMethod::l1_structured,
                   PruneMethod::l2_structured, PruneMethod::linf_structured, PruneMethod::random_structured,
                   PruneMethod::hybrid, PruneMethod::fc_only}) {
        CHECK(parse_method(method_name(m)) == m);
    }
    CHECK_FALSE(parse_method("l3_structured"));
    CHECK_THROWS_AS((PruneSpec{PruneMethod::l1_unstructured, Scope::local, Direction::prune_low, 1.0}.validate()),
                    ConfigError);
}
