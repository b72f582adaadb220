#include "sparselab/mask.hpp"

#include "sparselab/error.hpp"

#include <algorithm>

namespace sparselab {

Mask Mask::ones(std::string name, Shape shape) {
    const std::size_t n = shape_size(shape);
    return Mask{std::move(name), std::move(shape), std::vector<std::uint8_t>(n, 1)};
}

std::size_t Mask::kept() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

MaskSet MaskSet::all_ones(const ArchitectureSpec& arch) {
    MaskSet set;
    for (const auto& layer : arch.prunable_layers()) {
        set.masks.push_back(Mask::ones(layer.name, layer.weight_shape));
    }
    return set;
}

const Mask& MaskSet::by_name(const std::string& name) const {
    for (const auto& m : masks) {
        if (m.name == name) {
            return m;
        }
    }
    throw InputError("no mask for layer '" + name + "'");
}

std::size_t MaskSet::total() const {
    std::size_t n = 0;
    for (const auto& m : masks) {
        n += m.size();
    }
    return n;
}

std::size_t MaskSet::total_kept() const {
    std::size_t n = 0;
    for (const auto& m : masks) {
        n += m.kept();
    }
    return n;
}

void MaskSet::check_against(const ArchitectureSpec& arch) const {
    const auto layers = arch.prunable_layers();
    if (layers.size() != masks.size()) {
        throw StateError("mask set has " + std::to_string(masks.size()) + " masks, architecture '" + arch.name +
                         "' has " + std::to_string(layers.size()) + " prunable layers");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (masks[i].name != layers[i].name || masks[i].shape != layers[i].weight_shape ||
            masks[i].bits.size() != shape_size(layers[i].weight_shape)) {
            throw StateError("mask '" + masks[i].name + "' " + shape_to_string(masks[i].shape) +
                             " does not match layer '" + layers[i].name + "' " +
                             shape_to_string(layers[i].weight_shape));
        }
    }
}

bool nests_within(const MaskSet& inner, const MaskSet& outer) {
    if (inner.masks.size() != outer.masks.size()) {
        return false;
    }
    for (std::size_t l = 0; l < inner.masks.size(); ++l) {
        const auto& a = inner.masks[l].bits;
        const auto& b = outer.masks[l].bits;
        if (a.size() != b.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] != 0 && b[i] == 0) {
                return false;
            }
        }
    }
    return true;
}

} // namespace sparselab
