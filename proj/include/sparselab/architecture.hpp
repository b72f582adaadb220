#pragma once

#include "sparselab/tensor.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sparselab {

struct Conv2d {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct MaxPool2d {
    std::size_t window = 2;
    std::size_t stride = 2;
    friend bool operator==(const MaxPool2d&, const MaxPool2d&) = default;
};

struct Relu {
    friend bool operator==(const Relu&, const Relu&) = default;
};

struct Tanh {
    friend bool operator==(const Tanh&, const Tanh&) = default;
};

struct Flatten {
    friend bool operator==(const Flatten&, const Flatten&) = default;
};

struct Linear {
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    friend bool operator==(const Linear&, const Linear&) = default;
};

using LayerSpec = std::variant<Conv2d, MaxPool2d, Relu, Tanh, Flatten, Linear>;

enum class LayerKind { conv2d, maxpool2d, relu, tanh, flatten, linear };

LayerKind kind_of(const LayerSpec& layer);
std::string_view kind_name(LayerKind kind);
std::optional<LayerKind> parse_kind(std::string_view name);

inline bool is_prunable(const LayerSpec& layer) {
    return std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Linear>(layer);
}

// A prunable layer as seen by masks, checkpoints and reports.
struct PrunableLayer {
    std::size_t layer_index = 0;  // position in ArchitectureSpec::layers
    std::string name;             // conv1, conv2, ..., fc1, fc2, ...
    LayerKind kind = LayerKind::linear;
    Shape weight_shape;           // (out, in, kh, kw) or (out, in)
    Shape bias_shape;             // (out)
};

struct ArchitectureSpec {
    std::string name;
    Shape input_shape;  // (C, H, W) or (features)
    std::vector<LayerSpec> layers;

    // Per-example activation shape after every layer; throws ConfigError
    // naming the first layer whose input does not fit.
    std::vector<Shape> infer_shapes() const;
    Shape output_shape() const;
    std::size_t num_classes() const;
    // Prunable layers in order, named conv<k> / fc<k> by kind and position.
    std::vector<PrunableLayer> prunable_layers() const;
    std::size_t parameter_count() const;
    std::size_t weight_count() const;

    friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

// Fixed LeNet: two 3x3 convolutions (1->6, 6->16) with 2x2 pooling and a
// 400-120-84-10 head; 60,074 parameters.
ArchitectureSpec lenet();

// JSON document {"name", "input_shape", "layers": [{"kind", ...params}]}.
// Throws ConfigError on malformed documents, unknown kinds or shape mismatch.
ArchitectureSpec parse_architecture(std::string_view config_text);
std::string serialize_architecture(const ArchitectureSpec& spec);
ArchitectureSpec load_architecture(const std::string& path);
// "lenet" or a path to a JSON document.
ArchitectureSpec resolve_architecture(const std::string& name_or_path);

} // namespace sparselab
