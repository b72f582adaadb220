#pragma once

#include "sparselab/mask.hpp"
#include "sparselab/nn.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace sparselab {

enum class Handling { rewind, finetune, sign_sigma, sign_only };

std::string_view handling_name(Handling h);
std::optional<Handling> parse_handling(std::string_view name);

// Parameters captured at initialization (or at the late-resetting epoch)
// with each layer's population standard deviation of weights.
struct InitCheckpoint {
    Network net;
    std::vector<float> sigma;  // one per prunable layer

    static InitCheckpoint capture(const Network& net);
};

// Kept weights and all biases back to their captured values; pruned weights 0.
Network rewind(const Network& net, const InitCheckpoint& init, const MaskSet& masks);
// Trained values kept; pruned weights 0.
Network finetune_carryover(const Network& net, const MaskSet& masks);
// Kept weights to sigma_L * sign(w_init), biases rewound, pruned weights 0.
Network sign_sigma_reinit(const Network& net, const InitCheckpoint& init, const MaskSet& masks);
// Kept weights to sign(w_init), biases rewound, pruned weights 0.
Network sign_reinit(const Network& net, const InitCheckpoint& init, const MaskSet& masks);

Network apply_handling(Handling h, const Network& net, const InitCheckpoint& init, const MaskSet& masks);

} // namespace sparselab
