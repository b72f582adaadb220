#pragma once

#include "sparselab/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sparselab {

// Images (N, C, H, W) scaled to [0, 1] and their class labels.
struct Dataset {
    Tensor images;
    std::vector<std::uint8_t> labels;
    std::string split;

    std::size_t size() const { return labels.size(); }
    std::size_t example_size() const { return size() == 0 ? 0 : images.size() / size(); }
    Shape example_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
};

} // namespace sparselab
