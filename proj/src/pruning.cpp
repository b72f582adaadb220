#include "sparselab/pruning.hpp"

#include "sparselab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sparselab {

namespace {

struct Named {
    PruneMethod method;
    std::string_view name;
};

constexpr Named kMethods[] = {
    {PruneMethod::l1_unstructured, "l1_unstructured"},
    {PruneMethod::random_unstructured, "random_unstructured"},
    {PruneMethod::l1_structured, "l1_structured"},
    {PruneMethod::l2_structured, "l2_structured"},
    {PruneMethod::linf_structured, "linf_structured"},
    {PruneMethod::random_structured, "random_structured"},
    {PruneMethod::hybrid, "hybrid"},
    {PruneMethod::fc_only, "fc_only"},
};

bool before(const Candidate& a, const Candidate& b, Direction d) {
    if (a.score != b.score) {
        return d == Direction::prune_low ? a.score < b.score : a.score > b.score;
    }
    if (a.layer != b.layer) {
        return a.layer < b.layer;
    }
    return a.index < b.index;
}

void sort_by_priority(std::vector<Candidate>& c, Direction d) {
    std::sort(c.begin(), c.end(), [d](const Candidate& a, const Candidate& b) { return before(a, b, d); });
}

} // namespace

std::string_view method_name(PruneMethod m) {
    for (const auto& e : kMethods) {
        if (e.method == m) {
            return e.name;
        }
    }
    return "?";
}

std::optional<PruneMethod> parse_method(std::string_view name) {
    for (const auto& e : kMethods) {
        if (e.name == name) {
            return e.method;
        }
    }
    return std::nullopt;
}

std::string_view scope_name(Scope s) { return s == Scope::local ? "local" : "global"; }

std::optional<Scope> parse_scope(std::string_view name) {
    if (name == "local") {
        return Scope::local;
    }
    if (name == "global") {
        return Scope::global;
    }
    return std::nullopt;
}

std::string_view direction_name(Direction d) { return d == Direction::prune_low ? "prune_low" : "prune_high"; }

std::optional<Direction> parse_direction(std::string_view name) {
    if (name == "prune_low") {
        return Direction::prune_low;
    }
    if (name == "prune_high") {
        return Direction::prune_high;
    }
    return std::nullopt;
}

void PruneSpec::validate() const {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("pruning fraction must lie in (0, 1), got " + std::to_string(fraction));
    }
}

std::optional<LayerRule> rule_for(PruneMethod method, LayerKind kind) {
    const bool conv = kind == LayerKind::conv2d;
    switch (method) {
    case PruneMethod::l1_unstructured:
        return LayerRule{Granularity::unstructured, Criterion::l1};
    case PruneMethod::random_unstructured:
        return LayerRule{Granularity::unstructured, Criterion::random};
    case PruneMethod::l1_structured:
        return LayerRule{Granularity::structured, Criterion::l1};
    case PruneMethod::l2_structured:
        return LayerRule{Granularity::structured, Criterion::l2};
    case PruneMethod::linf_structured:
        return LayerRule{Granularity::structured, Criterion::linf};
    case PruneMethod::random_structured:
        return LayerRule{Granularity::structured, Criterion::random};
    case PruneMethod::hybrid:
        return conv ? LayerRule{Granularity::structured, Criterion::l1}
                    : LayerRule{Granularity::unstructured, Criterion::l1};
    case PruneMethod::fc_only:
        if (conv) {
            return std::nullopt;
        }
        return LayerRule{Granularity::unstructured, Criterion::l1};
    }
    return std::nullopt;
}

Tensor score_unstructured(const Tensor& weights, Criterion criterion, RngStream& rng) {
    Tensor scores(weights.shape());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        switch (criterion) {
        case Criterion::l1:
            scores[i] = std::fabs(weights[i]);
            break;
        case Criterion::random:
            scores[i] = rng.uniform01();
            break;
        default:
            throw InputError("unstructured scoring supports l1 and random only");
        }
    }
    return scores;
}

std::size_t slice_count(const Shape& weight_shape) {
    if (weight_shape.size() < 2) {
        throw DimensionError("weight shape " + shape_to_string(weight_shape) + " has no input axis");
    }
    return weight_shape[1];
}

std::size_t slice_of(const Shape& weight_shape, std::size_t flat) {
    const std::size_t inner = shape_size(weight_shape) / (weight_shape[0] * weight_shape[1]);
    return (flat / inner) % weight_shape[1];
}

std::vector<double> score_structured(const Tensor& weights, Criterion criterion, RngStream& rng) {
    const Shape& shape = weights.shape();
    const std::size_t slices = slice_count(shape);
    std::vector<double> scores(slices, 0.0);
    if (criterion == Criterion::random) {
        for (double& s : scores) {
            s = rng.uniform01();
        }
        return scores;
    }
    const std::size_t inner = shape_size(shape) / (shape[0] * slices);
    for (std::size_t o = 0; o < shape[0]; ++o) {
        for (std::size_t c = 0; c < slices; ++c) {
            const float* w = weights.data() + (o * slices + c) * inner;
            for (std::size_t j = 0; j < inner; ++j) {
                const double a = std::fabs(static_cast<double>(w[j]));
                switch (criterion) {
                case Criterion::l1:
                    scores[c] += a;
                    break;
                case Criterion::l2:
                    scores[c] += a * a;
                    break;
                default:
                    scores[c] = std::max(scores[c], a);
                    break;
                }
            }
        }
    }
    if (criterion == Criterion::l2) {
        for (double& s : scores) {
            s = std::sqrt(s);
        }
    }
    return scores;
}

std::size_t prune_count(double fraction, std::size_t remaining) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(remaining) + 0.5));
}

std::vector<Candidate> select(std::vector<Candidate> candidates, double fraction, Direction direction) {
    const std::size_t k = prune_count(fraction, candidates.size());
    sort_by_priority(candidates, direction);
    candidates.resize(k);
    return candidates;
}

namespace {

struct LayerWork {
    std::size_t param = 0;
    LayerRule rule;
    std::vector<Candidate> candidates;
    std::size_t cap = 0;  // most candidates this layer may lose in one step
};

} // namespace

MaskSet prune_step(const Network& trained, const MaskSet& masks, const PruneSpec& spec, RngStream& rng) {
    spec.validate();
    masks.check_against(trained.arch);
    const auto layers = trained.arch.prunable_layers();

    // Scores are drawn layer by layer in architecture order whatever the
    // scope, so random methods consume the stream identically.
    std::vector<LayerWork> work;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto rule = rule_for(spec.method, layers[i].kind);
        if (!rule) {
            continue;
        }
        const Tensor& w = trained.params[i].weight;
        const Mask& m = masks.masks[i];
        LayerWork lw{i, *rule, {}, 0};
        if (rule->granularity == Granularity::unstructured) {
            const Tensor s = score_unstructured(w, rule->criterion, rng);
            for (std::size_t j = 0; j < w.size(); ++j) {
                if (m.bits[j]) {
                    lw.candidates.push_back({s[j], i, j});
                }
            }
            lw.cap = lw.candidates.size();
        } else {
            const auto s = score_structured(w, rule->criterion, rng);
            std::vector<std::uint8_t> alive(s.size(), 0);
            for (std::size_t j = 0; j < m.bits.size(); ++j) {
                if (m.bits[j]) {
                    alive[slice_of(m.shape, j)] = 1;
                }
            }
            for (std::size_t c = 0; c < s.size(); ++c) {
                if (alive[c]) {
                    lw.candidates.push_back({s[c], i, c});
                }
            }
            // a layer keeps at least one input slice
            lw.cap = lw.candidates.empty() ? 0 : lw.candidates.size() - 1;
        }
        work.push_back(std::move(lw));
    }

    // Local scope prunes each layer on its own; global scope pools layers
    // that share a rule.
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t w = 0; w < work.size(); ++w) {
        bool placed = false;
        if (spec.scope == Scope::global) {
            for (auto& g : groups) {
                if (work[g.front()].rule == work[w].rule) {
                    g.push_back(w);
                    placed = true;
                    break;
                }
            }
        }
        if (!placed) {
            groups.push_back({w});
        }
    }

    MaskSet out = masks;
    out.iteration = masks.iteration + 1;
    for (const auto& g : groups) {
        std::vector<Candidate> pool;
        std::vector<std::size_t> budget(layers.size(), 0);
        for (std::size_t w : g) {
            pool.insert(pool.end(), work[w].candidates.begin(), work[w].candidates.end());
            budget[work[w].param] = work[w].cap;
        }
        const std::size_t k = prune_count(spec.fraction, pool.size());
        sort_by_priority(pool, spec.direction);
        std::size_t taken = 0;
        for (const auto& c : pool) {
            if (taken == k) {
                break;
            }
            if (budget[c.layer] == 0) {
                continue;
            }
            --budget[c.layer];
            ++taken;
            Mask& m = out.masks[c.layer];
            if (rule_for(spec.method, layers[c.layer].kind)->granularity == Granularity::unstructured) {
                m.bits[c.index] = 0;
                continue;
            }
            for (std::size_t j = 0; j < m.bits.size(); ++j) {
                if (slice_of(m.shape, j) == c.index) {
                    m.bits[j] = 0;
                }
            }
        }
    }
    return out;
}

} // namespace sparselab
