#pragma once

#include "sparselab/architecture.hpp"
#include "sparselab/mask.hpp"
#include "sparselab/tensor.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sparselab {

// 1 - |kept(a) & kept(b)| / |kept(a) | kept(b)|; 0 when both keep nothing.
double jaccard_distance(const Mask& a, const Mask& b);
// Fraction of coordinates whose bits differ.
double hamming_distance(const Mask& a, const Mask& b);

struct LayerSparsity {
    std::string name;
    std::size_t total = 0;
    std::size_t explicit_pruned = 0;
    std::size_t implicit_pruned = 0;  // kept, but feeding a dead unit or channel

    double explicit_fraction() const;
    double effective_fraction() const;
};

struct EffectiveSparsity {
    std::vector<LayerSparsity> layers;
    LayerSparsity network;  // sums over all layers, named "all"
};

// Backward liveness pass: output units are live, and a unit or channel is
// live iff a kept weight of the next prunable layer connects it to a live
// unit. Kept weights into dead units are implicitly pruned.
EffectiveSparsity effective_sparsity(const MaskSet& masks, const ArchitectureSpec& arch);
// Per-layer flags (1 = implicitly pruned), same layout as the masks.
std::vector<std::vector<std::uint8_t>> implicit_pruned_flags(const MaskSet& masks, const ArchitectureSpec& arch);

// Mean |w_i - w_{i-1}| over i >= 1 and coordinates kept at i, pooled over
// all such terms. weights[i] are the trained values of iteration i and
// masks[i] the mask in effect while training them.
double stability_score(std::span<const Tensor> weights, std::span<const Mask> masks);

struct QuartileMovement {
    double fraction = 0.0;                            // kept weights whose quartile changed
    std::array<std::array<std::size_t, 4>, 4> transitions{};  // [from][to]
};

// Quartiles of |w| over the kept weights, assigned by rank (ties broken by
// index): quartile = floor(4 * rank / n).
QuartileMovement quartile_movement(const Tensor& a, const Tensor& b, const Mask& mask);

struct EnsembleResult {
    std::vector<std::uint32_t> predictions;
    double accuracy = 0.0;  // percent
};

// Per-example mean of the members' probability rows (each (N, K)), argmax
// with ties to the lowest class. Independent of member order.
EnsembleResult ensemble_average(std::span<const Tensor> probabilities, std::span<const std::uint8_t> labels);
// (p, q) = number of examples where members p and q predict the same class.
std::vector<std::vector<std::size_t>> agreement_matrix(std::span<const std::vector<std::uint32_t>> predictions);

// Fraction of input slices (conv input channels, linear columns) whose
// mask bits are all zero.
double structuredness(const Mask& mask);
// Expected value of structuredness() for a uniformly random mask with the
// same pruned fraction: pruned_fraction^(slice size).
double random_structuredness(const Mask& mask);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

} // namespace sparselab
