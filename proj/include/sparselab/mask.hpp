#pragma once

#include "sparselab/architecture.hpp"
#include "sparselab/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace sparselab {

// Binary mask over one weight tensor: 1 = kept, 0 = pruned. Biases never
// carry masks.
struct Mask {
    std::string name;
    Shape shape;
    std::vector<std::uint8_t> bits;

    static Mask ones(std::string name, Shape shape);

    std::size_t size() const { return bits.size(); }
    std::size_t kept() const;
    std::size_t pruned() const { return size() - kept(); }

    friend bool operator==(const Mask&, const Mask&) = default;
};

// One mask per prunable layer, in architecture order, plus the pruning
// iteration that produced it (0 = nothing pruned yet).
struct MaskSet {
    std::size_t iteration = 0;
    std::vector<Mask> masks;

    static MaskSet all_ones(const ArchitectureSpec& arch);

    const Mask& by_name(const std::string& name) const;
    std::size_t total() const;
    std::size_t total_kept() const;
    // Throws StateError unless masks match the architecture's prunable layers.
    void check_against(const ArchitectureSpec& arch) const;

    friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

// True when every bit cleared in `outer` is also cleared in `inner`.
bool nests_within(const MaskSet& inner, const MaskSet& outer);

} // namespace sparselab
