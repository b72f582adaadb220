#include "sparselab/nn.hpp"

#include "sparselab/error.hpp"
#include "sparselab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <variant>

namespace sparselab {

namespace kn = sparselab::kernels;

const Parameter& Network::param(const std::string& name) const {
    for (const auto& p : params) {
        if (p.name == name) {
            return p;
        }
    }
    throw InputError("network has no parameter '" + name + "'");
}

Parameter& Network::param(const std::string& name) {
    return const_cast<Parameter&>(static_cast<const Network&>(*this).param(name));
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p.weight.size() + p.bias.size();
    }
    return n;
}

bool bitwise_equal(const Network& a, const Network& b) {
    if (!(a.arch == b.arch) || a.params.size() != b.params.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        if (a.params[i].name != b.params[i].name || !bitwise_equal(a.params[i].weight, b.params[i].weight) ||
            !bitwise_equal(a.params[i].bias, b.params[i].bias)) {
            return false;
        }
    }
    return true;
}

Network zero_network(const ArchitectureSpec& arch) {
    arch.infer_shapes();
    Network net{arch, {}};
    for (const auto& layer : arch.prunable_layers()) {
        net.params.push_back({layer.name, layer.layer_index, Tensor(layer.weight_shape), Tensor(layer.bias_shape)});
    }
    return net;
}

Network init_network(const ArchitectureSpec& arch, RngStream& rng) {
    Network net = zero_network(arch);
    for (auto& p : net.params) {
        const auto& shape = p.weight.shape();
        const std::size_t fan_in = shape_size(shape) / shape[0];
        const float bound = static_cast<float>(1.0 / std::sqrt(static_cast<double>(fan_in)));
        for (float& w : p.weight.values()) {
            w = rng.uniform(-bound, bound);
        }
        for (float& b : p.bias.values()) {
            b = rng.uniform(-bound, bound);
        }
    }
    return net;
}

Gradients Gradients::zeros_like(const Network& net) {
    Gradients g;
    for (const auto& p : net.params) {
        g.weight.emplace_back(p.weight.shape());
        g.bias.emplace_back(p.bias.shape());
    }
    return g;
}

namespace {

// Sums per-example partial buffers pairwise into parts[0].
void combine_pairwise(std::vector<float>& parts, std::size_t count, std::size_t len) {
    const auto& t = kn::active();
    for (std::size_t stride = 1; stride < count; stride *= 2) {
        for (std::size_t i = 0; i + stride < count; i += 2 * stride) {
            t.add(parts.data() + (i + stride) * len, parts.data() + i * len, len);
        }
    }
}

void im2col(const float* in, std::size_t channels, std::size_t h, std::size_t w, const Conv2d& c,
            std::size_t oh, std::size_t ow, float* col) {
    const std::size_t positions = oh * ow;
    const bool dense = c.stride == 1 && c.padding == 0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t ki = 0; ki < c.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < c.kernel_w; ++kj) {
                float* row = col + ((ch * c.kernel_h + ki) * c.kernel_w + kj) * positions;
                if (dense) {
                    for (std::size_t y = 0; y < oh; ++y) {
                        std::memcpy(row + y * ow, in + (ch * h + y + ki) * w + kj, ow * sizeof(float));
                    }
                    continue;
                }
                for (std::size_t y = 0; y < oh; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * c.stride + ki) -
                                              static_cast<std::ptrdiff_t>(c.padding);
                    for (std::size_t x = 0; x < ow; ++x) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * c.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(c.padding);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                            ix < static_cast<std::ptrdiff_t>(w);
                        row[y * ow + x] = inside ? in[(ch * h + static_cast<std::size_t>(iy)) * w +
                                                     static_cast<std::size_t>(ix)]
                                                 : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* col, std::size_t channels, std::size_t h, std::size_t w, const Conv2d& c,
                std::size_t oh, std::size_t ow, float* out) {
    const std::size_t positions = oh * ow;
    const bool dense = c.stride == 1 && c.padding == 0;
    const auto& t = kn::active();
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t ki = 0; ki < c.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < c.kernel_w; ++kj) {
                const float* row = col + ((ch * c.kernel_h + ki) * c.kernel_w + kj) * positions;
                if (dense) {
                    for (std::size_t y = 0; y < oh; ++y) {
                        t.add(row + y * ow, out + (ch * h + y + ki) * w + kj, ow);
                    }
                    continue;
                }
                for (std::size_t y = 0; y < oh; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * c.stride + ki) -
                                              static_cast<std::ptrdiff_t>(c.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                        continue;
                    }
                    for (std::size_t x = 0; x < ow; ++x) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * c.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(c.padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) {
                            continue;
                        }
                        out[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                            row[y * ow + x];
                    }
                }
            }
        }
    }
}

// Forward/backward workspace for one architecture. Buffers grow to the
// largest batch seen and are reused across calls.
class Engine {
public:
    explicit Engine(const ArchitectureSpec& arch) : arch_(arch) {
        out_shapes_ = arch.infer_shapes();
        in_shapes_.push_back(arch.input_shape);
        for (std::size_t l = 0; l + 1 < out_shapes_.size(); ++l) {
            in_shapes_.push_back(out_shapes_[l]);
        }
        const auto prunable = arch.prunable_layers();
        param_of_layer_.assign(arch.layers.size(), kNone);
        for (std::size_t i = 0; i < prunable.size(); ++i) {
            param_of_layer_[prunable[i].layer_index] = i;
        }
        acts_.resize(arch.layers.size() + 1);
        cols_.resize(arch.layers.size());
        argmax_.resize(arch.layers.size());
        wt_.resize(prunable.size());
    }

    std::size_t input_size() const { return shape_size(arch_.input_shape); }
    std::size_t num_classes() const { return shape_size(out_shapes_.back()); }

    float* input_buffer(std::size_t n) {
        acts_[0].resize(n * input_size());
        return acts_[0].data();
    }

    // Runs the network on the n examples already placed in input_buffer(n).
    const float* forward(const Network& net, std::size_t n) {
        batch_ = n;
        for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
            forward_layer(net, l);
        }
        return acts_.back().data();
    }

    // Mean cross-entropy of the last forward pass; gradients overwrite `grads`.
    float backward(const Network& net, std::span<const std::uint8_t> labels, Gradients& grads) {
        const std::size_t n = batch_;
        const std::size_t k = num_classes();
        if (labels.size() != n) {
            throw InputError("label count " + std::to_string(labels.size()) + " does not match batch " +
                             std::to_string(n));
        }
        grad_out_.resize(n * k);
        const float* logits = acts_.back().data();
        double loss = 0.0;
        const float inv_n = 1.0f / static_cast<float>(n);
        for (std::size_t b = 0; b < n; ++b) {
            if (labels[b] >= k) {
                throw InputError("label " + std::to_string(labels[b]) + " outside [0, " + std::to_string(k) +
                                 ")");
            }
            const float* row = logits + b * k;
            float* g = grad_out_.data() + b * k;
            const float m = *std::max_element(row, row + k);
            float s = 0.0f;
            for (std::size_t j = 0; j < k; ++j) {
                g[j] = std::exp(row[j] - m);
                s += g[j];
            }
            loss += static_cast<double>(std::log(s) - (row[labels[b]] - m));
            for (std::size_t j = 0; j < k; ++j) {
                g[j] = g[j] / s * inv_n;
            }
            g[labels[b]] -= inv_n;
        }
        for (std::size_t l = arch_.layers.size(); l-- > 0;) {
            backward_layer(net, l, grads, l > 0);
            std::swap(grad_out_, grad_in_);
        }
        return static_cast<float>(loss / static_cast<double>(n));
    }

private:
    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

    void forward_layer(const Network& net, std::size_t l) {
        const std::size_t n = batch_;
        const Shape& in_shape = in_shapes_[l];
        const Shape& out_shape = out_shapes_[l];
        const std::size_t in_size = shape_size(in_shape);
        const std::size_t out_size = shape_size(out_shape);
        const float* x = acts_[l].data();
        std::vector<float>& y = acts_[l + 1];
        y.resize(n * out_size);
        const auto& t = kn::active();

        if (const auto* c = std::get_if<Conv2d>(&arch_.layers[l])) {
            const Parameter& p = net.params[param_of_layer_[l]];
            const std::size_t kdim = c->in_channels * c->kernel_h * c->kernel_w;
            const std::size_t positions = out_shape[1] * out_shape[2];
            std::vector<float>& col = cols_[l];
            col.resize(n * kdim * positions);
            for (std::size_t b = 0; b < n; ++b) {
                float* colb = col.data() + b * kdim * positions;
                im2col(x + b * in_size, in_shape[0], in_shape[1], in_shape[2], *c, out_shape[1], out_shape[2],
                       colb);
                float* yb = y.data() + b * out_size;
                for (std::size_t oc = 0; oc < c->out_channels; ++oc) {
                    std::fill(yb + oc * positions, yb + (oc + 1) * positions, p.bias[oc]);
                }
                kn::gemm(c->out_channels, positions, kdim, p.weight.data(), kdim, colb, positions, yb, positions);
            }
        } else if (const auto* lin = std::get_if<Linear>(&arch_.layers[l])) {
            const std::size_t pi = param_of_layer_[l];
            const Parameter& p = net.params[pi];
            std::vector<float>& wt = wt_[pi];
            wt.resize(lin->in_features * lin->out_features);
            kn::transpose(p.weight.data(), lin->out_features, lin->in_features, lin->in_features, wt.data(),
                          lin->out_features);
            for (std::size_t b = 0; b < n; ++b) {
                std::copy(p.bias.data(), p.bias.data() + lin->out_features, y.data() + b * out_size);
            }
            kn::gemm(n, lin->out_features, lin->in_features, x, lin->in_features, wt.data(), lin->out_features,
                     y.data(), lin->out_features);
        } else if (const auto* pool = std::get_if<MaxPool2d>(&arch_.layers[l])) {
            std::vector<std::uint32_t>& arg = argmax_[l];
            arg.resize(n * out_size);
            const std::size_t h = in_shape[1], w = in_shape[2];
            const std::size_t oh = out_shape[1], ow = out_shape[2];
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t ch = 0; ch < in_shape[0]; ++ch) {
                    const std::size_t plane = b * in_size + ch * h * w;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            // first maximum in row-major window order wins
                            std::size_t best = plane + (oy * pool->stride) * w + ox * pool->stride;
                            float best_v = x[best];
                            if (pool->window == 2) {
                                const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                                for (std::size_t idx : cand) {
                                    if (x[idx] > best_v) {
                                        best_v = x[idx];
                                        best = idx;
                                    }
                                }
                            } else {
                                for (std::size_t i = 0; i < pool->window; ++i) {
                                    for (std::size_t j = 0; j < pool->window; ++j) {
                                        const std::size_t idx =
                                            plane + (oy * pool->stride + i) * w + ox * pool->stride + j;
                                        if (x[idx] > best_v) {
                                            best_v = x[idx];
                                            best = idx;
                                        }
                                    }
                                }
                            }
                            const std::size_t o = b * out_size + (ch * oh + oy) * ow + ox;
                            y[o] = best_v;
                            arg[o] = static_cast<std::uint32_t>(best - b * in_size);
                        }
                    }
                }
            }
        } else if (std::holds_alternative<Relu>(arch_.layers[l])) {
            t.relu_forward(x, y.data(), n * out_size);
        } else if (std::holds_alternative<Tanh>(arch_.layers[l])) {
            for (std::size_t i = 0; i < n * out_size; ++i) {
                y[i] = std::tanh(x[i]);
            }
        } else {
            std::copy(x, x + n * in_size, y.data());
        }
    }

    void backward_layer(const Network& net, std::size_t l, Gradients& grads, bool need_input_grad) {
        const std::size_t n = batch_;
        const Shape& in_shape = in_shapes_[l];
        const Shape& out_shape = out_shapes_[l];
        const std::size_t in_size = shape_size(in_shape);
        const std::size_t out_size = shape_size(out_shape);
        const float* x = acts_[l].data();
        const float* gy = grad_out_.data();
        grad_in_.resize(n * in_size);
        float* gx = grad_in_.data();
        const auto& t = kn::active();

        if (const auto* c = std::get_if<Conv2d>(&arch_.layers[l])) {
            const std::size_t pi = param_of_layer_[l];
            const Parameter& p = net.params[pi];
            const std::size_t kdim = c->in_channels * c->kernel_h * c->kernel_w;
            const std::size_t positions = out_shape[1] * out_shape[2];
            const std::size_t wlen = c->out_channels * kdim;
            partial_w_.assign(n * wlen, 0.0f);
            partial_b_.assign(n * c->out_channels, 0.0f);
            gy_t_.resize(positions * c->out_channels);
            // Per example: dW^T (K x OC) = col (K x P) * dY^T (P x OC).
            for (std::size_t b = 0; b < n; ++b) {
                const float* gyb = gy + b * out_size;
                kn::transpose(gyb, c->out_channels, positions, positions, gy_t_.data(), c->out_channels);
                kn::gemm(kdim, c->out_channels, positions, cols_[l].data() + b * kdim * positions, positions,
                         gy_t_.data(), c->out_channels, partial_w_.data() + b * wlen, c->out_channels);
                for (std::size_t oc = 0; oc < c->out_channels; ++oc) {
                    partial_b_[b * c->out_channels + oc] =
                        kn::sum(std::span<const float>(gyb + oc * positions, positions));
                }
            }
            combine_pairwise(partial_w_, n, wlen);
            combine_pairwise(partial_b_, n, c->out_channels);
            kn::transpose(partial_w_.data(), kdim, c->out_channels, c->out_channels, grads.weight[pi].data(), kdim);
            std::copy(partial_b_.begin(), partial_b_.begin() + static_cast<std::ptrdiff_t>(c->out_channels),
                      grads.bias[pi].data());
            if (need_input_grad) {
                std::vector<float>& wt = wt_[pi];
                wt.resize(kdim * c->out_channels);
                kn::transpose(p.weight.data(), c->out_channels, kdim, kdim, wt.data(), c->out_channels);
                dcol_.resize(kdim * positions);
                std::fill(gx, gx + n * in_size, 0.0f);
                for (std::size_t b = 0; b < n; ++b) {
                    std::fill(dcol_.begin(), dcol_.end(), 0.0f);
                    kn::gemm(kdim, positions, c->out_channels, wt.data(), c->out_channels, gy + b * out_size,
                             positions, dcol_.data(), positions);
                    col2im_add(dcol_.data(), in_shape[0], in_shape[1], in_shape[2], *c, out_shape[1],
                               out_shape[2], gx + b * in_size);
                }
            }
        } else if (const auto* lin = std::get_if<Linear>(&arch_.layers[l])) {
            const std::size_t pi = param_of_layer_[l];
            const Parameter& p = net.params[pi];
            const std::size_t out = lin->out_features;
            const std::size_t in = lin->in_features;
            gy_t_.resize(out * n);
            kn::transpose(gy, n, out, out, gy_t_.data(), n);
            float* gw = grads.weight[pi].data();
            std::fill(gw, gw + out * in, 0.0f);
            kn::gemm(out, in, n, gy_t_.data(), n, x, in, gw, in);
            for (std::size_t o = 0; o < out; ++o) {
                grads.bias[pi][o] = kn::sum(std::span<const float>(gy_t_.data() + o * n, n));
            }
            if (need_input_grad) {
                std::fill(gx, gx + n * in, 0.0f);
                kn::gemm(n, in, out, gy, out, p.weight.data(), in, gx, in);
            }
        } else if (std::holds_alternative<MaxPool2d>(arch_.layers[l])) {
            std::fill(gx, gx + n * in_size, 0.0f);
            const auto& arg = argmax_[l];
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t o = 0; o < out_size; ++o) {
                    gx[b * in_size + arg[b * out_size + o]] += gy[b * out_size + o];
                }
            }
        } else if (std::holds_alternative<Relu>(arch_.layers[l])) {
            t.relu_backward(acts_[l + 1].data(), gy, gx, n * out_size);
        } else if (std::holds_alternative<Tanh>(arch_.layers[l])) {
            const float* y = acts_[l + 1].data();
            for (std::size_t i = 0; i < n * out_size; ++i) {
                gx[i] = gy[i] * (1.0f - y[i] * y[i]);
            }
        } else {
            std::copy(gy, gy + n * out_size, gx);
        }
    }

    const ArchitectureSpec& arch_;
    std::vector<Shape> in_shapes_;
    std::vector<Shape> out_shapes_;
    std::vector<std::size_t> param_of_layer_;
    std::size_t batch_ = 0;

    std::vector<std::vector<float>> acts_;
    std::vector<std::vector<float>> cols_;
    std::vector<std::vector<std::uint32_t>> argmax_;
    std::vector<std::vector<float>> wt_;

    std::vector<float> grad_out_;
    std::vector<float> grad_in_;
    std::vector<float> partial_w_;
    std::vector<float> partial_b_;
    std::vector<float> dcol_;
    std::vector<float> gy_t_;
};

std::size_t check_batch(const Network& net, const Tensor& batch) {
    const Shape& in = net.arch.input_shape;
    const Shape& s = batch.shape();
    if (s.size() != in.size() + 1 || !std::equal(in.begin(), in.end(), s.begin() + 1)) {
        throw DimensionError("batch shape " + shape_to_string(s) + " does not match (B, " +
                             shape_to_string(in).substr(1));
    }
    return s[0];
}

void check_masks(const Network& net, const MaskSet& masks) {
    if (masks.masks.size() != net.params.size()) {
        throw StateError("mask set does not match network parameters");
    }
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        if (masks.masks[i].shape != net.params[i].weight.shape()) {
            throw StateError("mask '" + masks.masks[i].name + "' shape " + shape_to_string(masks.masks[i].shape) +
                             " does not match weight " + shape_to_string(net.params[i].weight.shape()));
        }
    }
}

} // namespace

Tensor forward(const Network& net, const Tensor& batch) {
    const std::size_t n = check_batch(net, batch);
    Engine engine(net.arch);
    if (n == 0) {
        return Tensor({0, engine.num_classes()});
    }
    std::copy(batch.data(), batch.data() + batch.size(), engine.input_buffer(n));
    const float* logits = engine.forward(net, n);
    const std::size_t k = engine.num_classes();
    return Tensor({n, k}, std::vector<float>(logits, logits + n * k));
}

LossAndGradients backward(const Network& net, const Tensor& batch, std::span<const std::uint8_t> labels) {
    const std::size_t n = check_batch(net, batch);
    if (n == 0) {
        throw InputError("backward on an empty batch");
    }
    Engine engine(net.arch);
    std::copy(batch.data(), batch.data() + batch.size(), engine.input_buffer(n));
    engine.forward(net, n);
    LossAndGradients out{Gradients::zeros_like(net), 0.0f};
    out.loss = engine.backward(net, labels, out.gradients);
    return out;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw DimensionError("softmax expects (B, K) logits, got " + shape_to_string(logits.shape()));
    }
    Tensor out(logits.shape());
    const std::size_t k = logits.dim(1);
    for (std::size_t b = 0; b < logits.dim(0); ++b) {
        const float* row = logits.data() + b * k;
        float* o = out.data() + b * k;
        const float m = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            s += std::exp(static_cast<double>(row[j]) - m);
        }
        for (std::size_t j = 0; j < k; ++j) {
            o[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - m) / s);
        }
    }
    return out;
}

void sgd_step(Network& net, const Gradients& grads, float lr, const MaskSet& masks) {
    if (!(lr > 0.0f)) {
        throw InputError("learning rate must be positive");
    }
    check_masks(net, masks);
    if (grads.weight.size() != net.params.size() || grads.bias.size() != net.params.size()) {
        throw DimensionError("gradients do not match network parameters");
    }
    const auto& t = kn::active();
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        Parameter& p = net.params[i];
        if (grads.weight[i].shape() != p.weight.shape() || grads.bias[i].shape() != p.bias.shape()) {
            throw DimensionError("gradient shape mismatch for '" + p.name + "'");
        }
        t.masked_sgd(lr, grads.weight[i].data(), masks.masks[i].bits.data(), p.weight.data(), p.weight.size());
        t.axpy(-lr, grads.bias[i].data(), p.bias.data(), p.bias.size());
    }
}

void apply_masks(Network& net, const MaskSet& masks) {
    check_masks(net, masks);
    const auto& t = kn::active();
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        t.apply_mask(masks.masks[i].bits.data(), net.params[i].weight.data(), net.params[i].weight.size());
    }
}

TrainResult train(Network& net, const MaskSet& masks, const Dataset& train_set, const Dataset* eval_set,
                  const TrainOptions& options, RngStream& shuffle) {
    if (options.epochs < 1) {
        throw InputError("epochs must be at least 1");
    }
    if (options.batch_size < 1) {
        throw InputError("batch size must be at least 1");
    }
    if (train_set.size() == 0) {
        throw InputError("empty training set");
    }
    if (train_set.example_shape() != net.arch.input_shape) {
        throw DimensionError("training examples " + shape_to_string(train_set.example_shape()) +
                             " do not match network input " + shape_to_string(net.arch.input_shape));
    }
    apply_masks(net, masks);

    Engine engine(net.arch);
    Gradients grads = Gradients::zeros_like(net);
    const std::size_t n = train_set.size();
    const std::size_t example = train_set.example_size();
    std::vector<std::size_t> order(n);
    std::vector<std::uint8_t> labels;
    TrainResult result;

    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = n - 1; i > 0; --i) {
            std::swap(order[i], order[shuffle.below(i + 1)]);
        }
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += options.batch_size) {
            const std::size_t count = std::min(options.batch_size, n - start);
            float* in = engine.input_buffer(count);
            labels.resize(count);
            for (std::size_t b = 0; b < count; ++b) {
                const std::size_t idx = order[start + b];
                std::memcpy(in + b * example, train_set.images.data() + idx * example, example * sizeof(float));
                labels[b] = train_set.labels[idx];
            }
            engine.forward(net, count);
            loss_sum += engine.backward(net, labels, grads);
            sgd_step(net, grads, options.lr, masks);
            ++batches;
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
        if (eval_set != nullptr) {
            result.epoch_accuracy.push_back(accuracy(net, *eval_set, options.eval_batch_size));
        }
        if (options.on_epoch_end) {
            options.on_epoch_end(epoch, net);
        }
    }
    return result;
}

Tensor predict_logits(const Network& net, const Dataset& data, std::size_t chunk) {
    if (data.size() > 0 && data.example_shape() != net.arch.input_shape) {
        throw DimensionError("examples " + shape_to_string(data.example_shape()) + " do not match network input " +
                             shape_to_string(net.arch.input_shape));
    }
    chunk = std::max<std::size_t>(chunk, 1);
    Engine engine(net.arch);
    const std::size_t k = engine.num_classes();
    const std::size_t example = data.example_size();
    Tensor out({data.size(), k});
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        const std::size_t count = std::min(chunk, data.size() - start);
        std::memcpy(engine.input_buffer(count), data.images.data() + start * example, count * example * sizeof(float));
        const float* logits = engine.forward(net, count);
        std::copy(logits, logits + count * k, out.data() + start * k);
    }
    return out;
}

std::vector<std::uint32_t> argmax_rows(const Tensor& scores) {
    if (scores.rank() != 2) {
        throw DimensionError("argmax expects a (N, K) tensor");
    }
    const std::size_t k = scores.dim(1);
    std::vector<std::uint32_t> out(scores.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float* row = scores.data() + i * k;
        out[i] = static_cast<std::uint32_t>(std::max_element(row, row + k) - row);
    }
    return out;
}

double accuracy(const Network& net, const Dataset& data, std::size_t chunk) {
    if (data.size() == 0) {
        throw InputError("accuracy on an empty dataset");
    }
    const auto pred = argmax_rows(predict_logits(net, data, chunk));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        correct += pred[i] == data.labels[i] ? 1 : 0;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace sparselab
