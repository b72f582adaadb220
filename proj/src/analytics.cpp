#include "sparselab/analytics.hpp"

#include "sparselab/error.hpp"
#include "sparselab/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <variant>

namespace sparselab {

namespace {

void check_same_shape(const Mask& a, const Mask& b) {
    if (a.shape != b.shape || a.bits.size() != b.bits.size()) {
        throw InputError("mask shapes differ: " + shape_to_string(a.shape) + " vs " + shape_to_string(b.shape));
    }
}

} // namespace

double jaccard_distance(const Mask& a, const Mask& b) {
    check_same_shape(a, b);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
        inter += x && y;
        uni += x || y;
    }
    if (uni == 0) {
        return 0.0;
    }
    return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

double hamming_distance(const Mask& a, const Mask& b) {
    check_same_shape(a, b);
    if (a.bits.empty()) {
        return 0.0;
    }
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        diff += (a.bits[i] != 0) != (b.bits[i] != 0);
    }
    return static_cast<double>(diff) / static_cast<double>(a.bits.size());
}

double LayerSparsity::explicit_fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(explicit_pruned) / static_cast<double>(total);
}

double LayerSparsity::effective_fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(explicit_pruned + implicit_pruned) / static_cast<double>(total);
}

std::vector<std::vector<std::uint8_t>> implicit_pruned_flags(const MaskSet& masks, const ArchitectureSpec& arch) {
    masks.check_against(arch);
    const auto shapes = arch.infer_shapes();
    std::vector<std::size_t> param_of(arch.layers.size(), static_cast<std::size_t>(-1));
    {
        std::size_t p = 0;
        for (std::size_t l = 0; l < arch.layers.size(); ++l) {
            if (is_prunable(arch.layers[l])) {
                param_of[l] = p++;
            }
        }
    }
    // Liveness is tracked per channel for (C, H, W) activations and per
    // feature for flat ones.
    auto units = [](const Shape& s) -> std::size_t {
        if (s.size() == 1 || s.size() == 3) {
            return s[0];
        }
        throw UnsupportedError("liveness analysis needs (C, H, W) or flat activations, got " + shape_to_string(s));
    };

    std::vector<std::vector<std::uint8_t>> flags(masks.masks.size());
    std::vector<std::uint8_t> live(units(shapes.back()), 1);
    for (std::size_t l = arch.layers.size(); l-- > 0;) {
        const Shape& in_shape = l == 0 ? arch.input_shape : shapes[l - 1];
        const LayerSpec& layer = arch.layers[l];
        if (is_prunable(layer)) {
            const Mask& m = masks.masks[param_of[l]];
            const std::size_t out = m.shape[0];
            const std::size_t in = m.shape[1];
            const std::size_t inner = m.bits.size() / (out * in);
            if (live.size() != out) {
                throw UnsupportedError("layer " + std::to_string(l) + " output does not match its successor");
            }
            auto& f = flags[param_of[l]];
            f.assign(m.bits.size(), 0);
            std::vector<std::uint8_t> live_in(in, 0);
            for (std::size_t o = 0; o < out; ++o) {
                for (std::size_t c = 0; c < in; ++c) {
                    for (std::size_t j = 0; j < inner; ++j) {
                        const std::size_t idx = (o * in + c) * inner + j;
                        if (!m.bits[idx]) {
                            continue;
                        }
                        if (live[o]) {
                            live_in[c] = 1;
                        } else {
                            f[idx] = 1;
                        }
                    }
                }
            }
            live = std::move(live_in);
        } else if (std::holds_alternative<Flatten>(layer) && in_shape.size() == 3) {
            const std::size_t block = in_shape[1] * in_shape[2];
            std::vector<std::uint8_t> live_in(in_shape[0], 0);
            for (std::size_t i = 0; i < live.size(); ++i) {
                if (live[i]) {
                    live_in[i / block] = 1;
                }
            }
            live = std::move(live_in);
        }
        // activations and pooling keep the channel/feature layout
    }
    return flags;
}

EffectiveSparsity effective_sparsity(const MaskSet& masks, const ArchitectureSpec& arch) {
    const auto flags = implicit_pruned_flags(masks, arch);
    EffectiveSparsity es;
    es.network.name = "all";
    for (std::size_t i = 0; i < masks.masks.size(); ++i) {
        const Mask& m = masks.masks[i];
        LayerSparsity s{m.name, m.size(), m.pruned(),
                        static_cast<std::size_t>(std::count(flags[i].begin(), flags[i].end(), 1))};
        es.network.total += s.total;
        es.network.explicit_pruned += s.explicit_pruned;
        es.network.implicit_pruned += s.implicit_pruned;
        es.layers.push_back(std::move(s));
    }
    return es;
}

double stability_score(std::span<const Tensor> weights, std::span<const Mask> masks) {
    if (weights.size() < 2 || masks.size() != weights.size()) {
        throw InputError("stability needs at least two iterations with one mask each");
    }
    double sum = 0.0;
    std::size_t terms = 0;
    for (std::size_t i = 1; i < weights.size(); ++i) {
        const Tensor& a = weights[i - 1];
        const Tensor& b = weights[i];
        const Mask& m = masks[i];
        if (a.shape() != b.shape() || m.shape != b.shape()) {
            throw InputError("trajectory shapes differ at iteration " + std::to_string(i));
        }
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (m.bits[j]) {
                sum += std::fabs(static_cast<double>(b[j]) - static_cast<double>(a[j]));
                ++terms;
            }
        }
    }
    return terms == 0 ? 0.0 : sum / static_cast<double>(terms);
}

namespace {

std::vector<int> quartiles(const Tensor& w, const std::vector<std::size_t>& kept) {
    std::vector<std::size_t> order(kept.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const float ax = std::fabs(w[kept[x]]), ay = std::fabs(w[kept[y]]);
        return ax != ay ? ax < ay : x < y;
    });
    std::vector<int> q(kept.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        q[order[r]] = static_cast<int>(4 * r / order.size());
    }
    return q;
}

} // namespace

QuartileMovement quartile_movement(const Tensor& a, const Tensor& b, const Mask& mask) {
    if (a.shape() != b.shape() || mask.shape != a.shape()) {
        throw InputError("quartile movement needs equal weight and mask shapes");
    }
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < mask.bits.size(); ++j) {
        if (mask.bits[j]) {
            kept.push_back(j);
        }
    }
    if (kept.size() < 4) {
        throw InputError("quartile movement needs at least 4 kept weights, got " + std::to_string(kept.size()));
    }
    const auto qa = quartiles(a, kept);
    const auto qb = quartiles(b, kept);
    QuartileMovement r;
    std::size_t moved = 0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        ++r.transitions[static_cast<std::size_t>(qa[i])][static_cast<std::size_t>(qb[i])];
        moved += qa[i] != qb[i];
    }
    r.fraction = static_cast<double>(moved) / static_cast<double>(kept.size());
    return r;
}

EnsembleResult ensemble_average(std::span<const Tensor> probabilities, std::span<const std::uint8_t> labels) {
    if (probabilities.size() < 2) {
        throw InputError("an ensemble needs at least two members");
    }
    const Shape& shape = probabilities[0].shape();
    if (shape.size() != 2) {
        throw InputError("member predictions must be (N, K)");
    }
    for (const auto& p : probabilities) {
        if (p.shape() != shape) {
            throw InputError("ragged prediction set: " + shape_to_string(p.shape()) + " vs " +
                             shape_to_string(shape));
        }
    }
    const std::size_t n = shape[0], k = shape[1];
    if (labels.size() != n) {
        throw InputError("label count does not match predictions");
    }
    EnsembleResult r;
    r.predictions.resize(n);
    std::vector<float> column(probabilities.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = -1.0;
        std::uint32_t arg = 0;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t m = 0; m < probabilities.size(); ++m) {
                column[m] = probabilities[m][i * k + c];
            }
            // summing in sorted order makes the mean independent of member order
            std::sort(column.begin(), column.end());
            double s = 0.0;
            for (float v : column) {
                s += v;
            }
            const double mean = s / static_cast<double>(column.size());
            if (mean > best) {
                best = mean;
                arg = static_cast<std::uint32_t>(c);
            }
        }
        r.predictions[i] = arg;
        correct += arg == labels[i];
    }
    r.accuracy = n == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(n);
    return r;
}

std::vector<std::vector<std::size_t>> agreement_matrix(std::span<const std::vector<std::uint32_t>> predictions) {
    const std::size_t m = predictions.size();
    std::vector<std::vector<std::size_t>> out(m, std::vector<std::size_t>(m, 0));
    for (std::size_t p = 0; p < m; ++p) {
        if (predictions[p].size() != predictions[0].size()) {
            throw InputError("prediction sets have different example counts");
        }
        for (std::size_t q = p; q < m; ++q) {
            std::size_t same = 0;
            for (std::size_t i = 0; i < predictions[p].size(); ++i) {
                same += predictions[p][i] == predictions[q][i];
            }
            out[p][q] = out[q][p] = same;
        }
    }
    return out;
}

double structuredness(const Mask& mask) {
    const std::size_t slices = slice_count(mask.shape);
    std::vector<std::uint8_t> alive(slices, 0);
    for (std::size_t j = 0; j < mask.bits.size(); ++j) {
        if (mask.bits[j]) {
            alive[slice_of(mask.shape, j)] = 1;
        }
    }
    const auto dead = static_cast<double>(std::count(alive.begin(), alive.end(), 0));
    return dead / static_cast<double>(slices);
}

double random_structuredness(const Mask& mask) {
    const std::size_t slices = slice_count(mask.shape);
    const double pruned = static_cast<double>(mask.pruned()) / static_cast<double>(mask.size());
    return std::pow(pruned, static_cast<double>(mask.size() / slices));
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            ranks[order[t]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw InputError("spearman needs two equally long samples of size >= 2");
    }
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace sparselab
