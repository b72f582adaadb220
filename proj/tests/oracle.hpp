#pragma once

// Straightforward double-precision reimplementations used as independent
// references by the tests. Nothing here shares code with the engine.

#include "sparselab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <variant>
#include <vector>

namespace oracle {

using sparselab::Conv2d;
using sparselab::Flatten;
using sparselab::Linear;
using sparselab::MaxPool2d;
using sparselab::Relu;
using sparselab::Tanh;

struct Act {
    std::vector<std::size_t> shape;  // per example
    std::vector<double> v;
};

inline Act layer_forward(const sparselab::LayerSpec& layer, const sparselab::Parameter* p, const Act& x) {
    Act y;
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
        const std::size_t h = x.shape[1], w = x.shape[2];
        const std::size_t oh = (h + 2 * c->padding - c->kernel_h) / c->stride + 1;
        const std::size_t ow = (w + 2 * c->padding - c->kernel_w) / c->stride + 1;
        y.shape = {c->out_channels, oh, ow};
        y.v.assign(c->out_channels * oh * ow, 0.0);
        for (std::size_t o = 0; o < c->out_channels; ++o)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double s = p->bias[o];
                    for (std::size_t ci = 0; ci < c->in_channels; ++ci)
                        for (std::size_t a = 0; a < c->kernel_h; ++a)
                            for (std::size_t b = 0; b < c->kernel_w; ++b) {
                                const long yy = long(i * c->stride + a) - long(c->padding);
                                const long xx = long(j * c->stride + b) - long(c->padding);
                                if (yy < 0 || xx < 0 || yy >= long(h) || xx >= long(w)) continue;
                                s += double(p->weight[((o * c->in_channels + ci) * c->kernel_h + a) * c->kernel_w + b]) *
                                     x.v[(ci * h + std::size_t(yy)) * w + std::size_t(xx)];
                            }
                    y.v[(o * oh + i) * ow + j] = s;
                }
    } else if (const auto* pool = std::get_if<MaxPool2d>(&layer)) {
        const std::size_t ch = x.shape[0], h = x.shape[1], w = x.shape[2];
        const std::size_t oh = (h - pool->window) / pool->stride + 1, ow = (w - pool->window) / pool->stride + 1;
        y.shape = {ch, oh, ow};
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double m = -INFINITY;
                    for (std::size_t a = 0; a < pool->window; ++a)
                        for (std::size_t b = 0; b < pool->window; ++b)
                            m = std::max(m, x.v[(c * h + i * pool->stride + a) * w + j * pool->stride + b]);
                    y.v.push_back(m);
                }
    } else if (const auto* lin = std::get_if<Linear>(&layer)) {
        y.shape = {lin->out_features};
        for (std::size_t o = 0; o < lin->out_features; ++o) {
            double s = p->bias[o];
            for (std::size_t i = 0; i < lin->in_features; ++i) s += double(p->weight[o * lin->in_features + i]) * x.v[i];
            y.v.push_back(s);
        }
    } else if (std::holds_alternative<Relu>(layer)) {
        y = x;
        for (double& v : y.v) v = v > 0 ? v : 0;
    } else if (std::holds_alternative<Tanh>(layer)) {
        y = x;
        for (double& v : y.v) v = std::tanh(v);
    } else {
        y.v = x.v;
        y.shape = {x.v.size()};
    }
    return y;
}

// Logits of one example.
inline std::vector<double> forward(const sparselab::Network& net, const float* example) {
    Act a;
    a.shape = net.arch.input_shape;
    a.v.assign(example, example + sparselab::shape_size(a.shape));
    std::size_t p = 0;
    for (const auto& layer : net.arch.layers) {
        const sparselab::Parameter* param = sparselab::is_prunable(layer) ? &net.params[p++] : nullptr;
        a = layer_forward(layer, param, a);
    }
    return a.v;
}

// Mean softmax cross-entropy over a batch.
inline double loss(const sparselab::Network& net, const sparselab::Tensor& batch, const std::vector<std::uint8_t>& labels) {
    const std::size_t n = batch.dim(0), stride = batch.size() / n;
    double total = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        const auto z = forward(net, batch.data() + b * stride);
        const double m = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (double v : z) s += std::exp(v - m);
        total += std::log(s) + m - z[labels[b]];
    }
    return total / double(n);
}

} // namespace oracle
