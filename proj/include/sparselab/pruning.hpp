#pragma once

#include "sparselab/architecture.hpp"
#include "sparselab/mask.hpp"
#include "sparselab/nn.hpp"
#include "sparselab/rng.hpp"
#include "sparselab/tensor.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sparselab {

enum class PruneMethod {
    l1_unstructured,
    random_unstructured,
    l1_structured,
    l2_structured,
    linf_structured,
    random_structured,
    hybrid,   // l1 structured on conv layers, l1 unstructured on linear layers
    fc_only,  // l1 unstructured on linear layers, conv layers untouched
};

enum class Scope { local, global };
enum class Direction { prune_low, prune_high };

std::string_view method_name(PruneMethod m);
std::optional<PruneMethod> parse_method(std::string_view name);
std::string_view scope_name(Scope s);
std::optional<Scope> parse_scope(std::string_view name);
std::string_view direction_name(Direction d);
std::optional<Direction> parse_direction(std::string_view name);

struct PruneSpec {
    PruneMethod method = PruneMethod::l1_unstructured;
    Scope scope = Scope::local;
    Direction direction = Direction::prune_low;
    double fraction = 0.2;  // of the remaining candidates, per iteration

    // ConfigError unless fraction is in (0, 1).
    void validate() const;
};

enum class Granularity { unstructured, structured };
enum class Criterion { l1, l2, linf, random };

// What a method does to one layer; nullopt leaves the layer untouched.
struct LayerRule {
    Granularity granularity = Granularity::unstructured;
    Criterion criterion = Criterion::l1;

    friend bool operator==(const LayerRule&, const LayerRule&) = default;
};
std::optional<LayerRule> rule_for(PruneMethod method, LayerKind kind);

// Elementwise scores: |w| for l1, uniform(0,1) draws (one per weight,
// row-major) for random.
Tensor score_unstructured(const Tensor& weights, Criterion criterion, RngStream& rng);

// Number of input slices of a weight tensor: w[:, c, ...] for conv, column c
// for linear.
std::size_t slice_count(const Shape& weight_shape);
// Input slice holding weight index `flat` (row-major).
std::size_t slice_of(const Shape& weight_shape, std::size_t flat);
// One score per input slice: L1 sum, L2 norm, max |w|, or a uniform draw.
std::vector<double> score_structured(const Tensor& weights, Criterion criterion, RngStream& rng);

struct Candidate {
    double score = 0.0;
    std::size_t layer = 0;
    std::size_t index = 0;  // weight index (unstructured) or slice index (structured)
};

// Round-half-up of fraction * remaining.
std::size_t prune_count(double fraction, std::size_t remaining);

// Picks prune_count(fraction, candidates.size()) candidates, lowest scores
// first for prune_low and highest first for prune_high; ties go to the lower
// (layer, index). Returned in that priority order.
std::vector<Candidate> select(std::vector<Candidate> candidates, double fraction, Direction direction);

// Scores the trained weights and removes fraction of the remaining weights
// (or input slices) of every layer the method touches. The result nests
// inside `masks` and carries iteration masks.iteration + 1.
MaskSet prune_step(const Network& trained, const MaskSet& masks, const PruneSpec& spec, RngStream& rng);

} // namespace sparselab
