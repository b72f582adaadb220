#include "sparselab/architecture.hpp"

#include "sparselab/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace sparselab {

using ojson = nlohmann::ordered_json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void layer_error(std::size_t index, const LayerSpec& layer, const std::string& what) {
    throw ConfigError("layer " + std::to_string(index) + " (" + std::string(kind_name(kind_of(layer))) +
                      "): " + what);
}

Shape infer_one(std::size_t index, const LayerSpec& layer, const Shape& in) {
    return std::visit(
        overloaded{
            [&](const Conv2d& c) -> Shape {
                if (in.size() != 3) {
                    layer_error(index, layer, "expects (C,H,W) input, got " + shape_to_string(in));
                }
                if (c.in_channels == 0 || c.out_channels == 0 || c.kernel_h == 0 || c.kernel_w == 0 ||
                    c.stride == 0) {
                    layer_error(index, layer, "channel, kernel and stride sizes must be positive");
                }
                if (in[0] != c.in_channels) {
                    layer_error(index, layer,
                                "in_channels " + std::to_string(c.in_channels) + " does not match input " +
                                    shape_to_string(in));
                }
                const std::size_t h = in[1] + 2 * c.padding;
                const std::size_t w = in[2] + 2 * c.padding;
                if (h < c.kernel_h || w < c.kernel_w) {
                    layer_error(index, layer, "kernel larger than padded input " + shape_to_string(in));
                }
                return {c.out_channels, (h - c.kernel_h) / c.stride + 1, (w - c.kernel_w) / c.stride + 1};
            },
            [&](const MaxPool2d& p) -> Shape {
                if (in.size() != 3) {
                    layer_error(index, layer, "expects (C,H,W) input, got " + shape_to_string(in));
                }
                if (p.window == 0 || p.stride == 0) {
                    layer_error(index, layer, "window and stride must be positive");
                }
                if (in[1] < p.window || in[2] < p.window) {
                    layer_error(index, layer, "window larger than input " + shape_to_string(in));
                }
                return {in[0], (in[1] - p.window) / p.stride + 1, (in[2] - p.window) / p.stride + 1};
            },
            [&](const Relu&) -> Shape { return in; },
            [&](const Tanh&) -> Shape { return in; },
            [&](const Flatten&) -> Shape { return {shape_size(in)}; },
            [&](const Linear& l) -> Shape {
                if (l.in_features == 0 || l.out_features == 0) {
                    layer_error(index, layer, "feature counts must be positive");
                }
                if (in.size() != 1) {
                    layer_error(index, layer, "expects flat input, got " + shape_to_string(in));
                }
                if (in[0] != l.in_features) {
                    layer_error(index, layer,
                                "in_features " + std::to_string(l.in_features) + " does not match input " +
                                    shape_to_string(in));
                }
                return {l.out_features};
            },
        },
        layer);
}

std::size_t get_size(const ojson& obj, const char* key, std::size_t index,
                     std::optional<std::size_t> fallback = std::nullopt) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (fallback) {
            return *fallback;
        }
        throw ConfigError("layer " + std::to_string(index) + ": missing field '" + key + "'");
    }
    if (!it->is_number_unsigned()) {
        throw ConfigError("layer " + std::to_string(index) + ": field '" + key +
                          "' must be a non-negative integer");
    }
    return it->get<std::size_t>();
}

LayerSpec parse_layer(const ojson& obj, std::size_t index) {
    if (!obj.is_object() || !obj.contains("kind") || !obj["kind"].is_string()) {
        throw ConfigError("layer " + std::to_string(index) + ": expected an object with a string 'kind'");
    }
    const std::string kind = obj["kind"].get<std::string>();
    const auto parsed = parse_kind(kind);
    if (!parsed) {
        throw ConfigError("layer " + std::to_string(index) + ": unknown layer kind '" + kind + "'");
    }
    switch (*parsed) {
    case LayerKind::conv2d:
        return Conv2d{get_size(obj, "in_channels", index), get_size(obj, "out_channels", index),
                      get_size(obj, "kernel_h", index), get_size(obj, "kernel_w", index),
                      get_size(obj, "stride", index, 1), get_size(obj, "padding", index, 0)};
    case LayerKind::maxpool2d: {
        const std::size_t window = get_size(obj, "window", index, 2);
        return MaxPool2d{window, get_size(obj, "stride", index, window)};
    }
    case LayerKind::relu: return Relu{};
    case LayerKind::tanh: return Tanh{};
    case LayerKind::flatten: return Flatten{};
    case LayerKind::linear:
        return Linear{get_size(obj, "in_features", index), get_size(obj, "out_features", index)};
    }
    throw ConfigError("unreachable layer kind");
}

ojson layer_to_json(const LayerSpec& layer) {
    ojson j;
    j["kind"] = std::string(kind_name(kind_of(layer)));
    std::visit(overloaded{
                   [&](const Conv2d& c) {
                       j["in_channels"] = c.in_channels;
                       j["out_channels"] = c.out_channels;
                       j["kernel_h"] = c.kernel_h;
                       j["kernel_w"] = c.kernel_w;
                       j["stride"] = c.stride;
                       j["padding"] = c.padding;
                   },
                   [&](const MaxPool2d& p) {
                       j["window"] = p.window;
                       j["stride"] = p.stride;
                   },
                   [&](const Relu&) {},
                   [&](const Tanh&) {},
                   [&](const Flatten&) {},
                   [&](const Linear& l) {
                       j["in_features"] = l.in_features;
                       j["out_features"] = l.out_features;
                   },
               },
               layer);
    return j;
}

} // namespace

LayerKind kind_of(const LayerSpec& layer) {
    return std::visit(overloaded{
                          [](const Conv2d&) { return LayerKind::conv2d; },
                          [](const MaxPool2d&) { return LayerKind::maxpool2d; },
                          [](const Relu&) { return LayerKind::relu; },
                          [](const Tanh&) { return LayerKind::tanh; },
                          [](const Flatten&) { return LayerKind::flatten; },
                          [](const Linear&) { return LayerKind::linear; },
                      },
                      layer);
}

std::string_view kind_name(LayerKind kind) {
    switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::flatten: return "flatten";
    case LayerKind::linear: return "linear";
    }
    return "unknown";
}

std::optional<LayerKind> parse_kind(std::string_view name) {
    for (LayerKind k : {LayerKind::conv2d, LayerKind::maxpool2d, LayerKind::relu, LayerKind::tanh,
                        LayerKind::flatten, LayerKind::linear}) {
        if (kind_name(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::vector<Shape> ArchitectureSpec::infer_shapes() const {
    if (input_shape.empty() || shape_size(input_shape) == 0) {
        throw ConfigError("architecture '" + name + "': input_shape must be non-empty and positive");
    }
    if (layers.empty()) {
        throw ConfigError("architecture '" + name + "': no layers");
    }
    std::vector<Shape> shapes;
    shapes.reserve(layers.size());
    Shape current = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        current = infer_one(i, layers[i], current);
        shapes.push_back(current);
    }
    return shapes;
}

Shape ArchitectureSpec::output_shape() const { return infer_shapes().back(); }

std::size_t ArchitectureSpec::num_classes() const {
    const Shape out = output_shape();
    if (out.size() != 1) {
        throw ConfigError("architecture '" + name + "': output is not a class vector");
    }
    return out[0];
}

std::vector<PrunableLayer> ArchitectureSpec::prunable_layers() const {
    std::vector<PrunableLayer> out;
    std::size_t convs = 0;
    std::size_t fcs = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (const auto* c = std::get_if<Conv2d>(&layers[i])) {
            out.push_back({i, "conv" + std::to_string(++convs), LayerKind::conv2d,
                           {c->out_channels, c->in_channels, c->kernel_h, c->kernel_w},
                           {c->out_channels}});
        } else if (const auto* l = std::get_if<Linear>(&layers[i])) {
            out.push_back({i, "fc" + std::to_string(++fcs), LayerKind::linear,
                           {l->out_features, l->in_features},
                           {l->out_features}});
        }
    }
    return out;
}

std::size_t ArchitectureSpec::weight_count() const {
    std::size_t total = 0;
    for (const auto& p : prunable_layers()) {
        total += shape_size(p.weight_shape);
    }
    return total;
}

std::size_t ArchitectureSpec::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : prunable_layers()) {
        total += shape_size(p.weight_shape) + shape_size(p.bias_shape);
    }
    return total;
}

ArchitectureSpec lenet() {
    return ArchitectureSpec{
        "lenet",
        {1, 28, 28},
        {
            Conv2d{1, 6, 3, 3, 1, 0},
            Relu{},
            MaxPool2d{2, 2},
            Conv2d{6, 16, 3, 3, 1, 0},
            Relu{},
            MaxPool2d{2, 2},
            Flatten{},
            Linear{400, 120},
            Relu{},
            Linear{120, 84},
            Relu{},
            Linear{84, 10},
        },
    };
}

ArchitectureSpec parse_architecture(std::string_view config_text) {
    ojson doc;
    try {
        doc = ojson::parse(config_text);
    } catch (const ojson::parse_error& e) {
        throw ConfigError(std::string("architecture config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("architecture config must be a JSON object");
    }
    ArchitectureSpec spec;
    if (!doc.contains("name") || !doc["name"].is_string()) {
        throw ConfigError("architecture config: missing string field 'name'");
    }
    spec.name = doc["name"].get<std::string>();
    if (!doc.contains("input_shape") || !doc["input_shape"].is_array()) {
        throw ConfigError("architecture config: missing array field 'input_shape'");
    }
    for (const auto& d : doc["input_shape"]) {
        if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
            throw ConfigError("architecture config: input_shape entries must be positive integers");
        }
        spec.input_shape.push_back(d.get<std::size_t>());
    }
    if (!doc.contains("layers") || !doc["layers"].is_array()) {
        throw ConfigError("architecture config: missing array field 'layers'");
    }
    std::size_t index = 0;
    for (const auto& layer : doc["layers"]) {
        spec.layers.push_back(parse_layer(layer, index++));
    }
    spec.infer_shapes();
    return spec;
}

std::string serialize_architecture(const ArchitectureSpec& spec) {
    ojson doc;
    doc["name"] = spec.name;
    doc["input_shape"] = spec.input_shape;
    doc["layers"] = ojson::array();
    for (const auto& layer : spec.layers) {
        doc["layers"].push_back(layer_to_json(layer));
    }
    return doc.dump(2) + "\n";
}

ArchitectureSpec load_architecture(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open architecture config '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_architecture(buf.str());
}

ArchitectureSpec resolve_architecture(const std::string& name_or_path) {
    if (name_or_path == "lenet") {
        return lenet();
    }
    return load_architecture(name_or_path);
}

} // namespace sparselab
