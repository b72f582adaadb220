#include "sparselab/weight_handling.hpp"

#include "sparselab/error.hpp"

#include <cmath>

namespace sparselab {

namespace {

float sign_of(float v) {
    return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f);
}

void check_shapes(const Network& net, const InitCheckpoint& init, const MaskSet& masks) {
    if (!(net.arch == init.net.arch) || net.params.size() != init.net.params.size() ||
        init.sigma.size() != net.params.size()) {
        throw StateError("init checkpoint does not match network architecture '" + net.arch.name + "'");
    }
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        if (net.params[i].weight.shape() != init.net.params[i].weight.shape() ||
            net.params[i].bias.shape() != init.net.params[i].bias.shape()) {
            throw StateError("init checkpoint tensor shapes differ for layer '" + net.params[i].name + "'");
        }
    }
    masks.check_against(net.arch);
}

// Kept weights take f(layer, init value); biases are rewound.
template <class F>
Network reset_from_init(const Network& net, const InitCheckpoint& init, const MaskSet& masks, F f) {
    check_shapes(net, init, masks);
    Network out = net;
    for (std::size_t i = 0; i < out.params.size(); ++i) {
        Tensor& w = out.params[i].weight;
        const Tensor& w0 = init.net.params[i].weight;
        const auto& bits = masks.masks[i].bits;
        for (std::size_t j = 0; j < w.size(); ++j) {
            w[j] = bits[j] ? f(i, w0[j]) : 0.0f;
        }
        out.params[i].bias = init.net.params[i].bias;
    }
    return out;
}

} // namespace

std::string_view handling_name(Handling h) {
    switch (h) {
    case Handling::rewind:
        return "rewind";
    case Handling::finetune:
        return "finetune";
    case Handling::sign_sigma:
        return "sign_sigma";
    case Handling::sign_only:
        return "sign_only";
    }
    return "?";
}

std::optional<Handling> parse_handling(std::string_view name) {
    for (Handling h : {Handling::rewind, Handling::finetune, Handling::sign_sigma, Handling::sign_only}) {
        if (handling_name(h) == name) {
            return h;
        }
    }
    return std::nullopt;
}

InitCheckpoint InitCheckpoint::capture(const Network& net) {
    InitCheckpoint c{net, {}};
    for (const auto& p : net.params) {
        const auto w = p.weight.values();
        double mean = 0.0;
        for (float v : w) {
            mean += v;
        }
        mean /= static_cast<double>(w.size());
        double var = 0.0;
        for (float v : w) {
            var += (v - mean) * (v - mean);
        }
        c.sigma.push_back(static_cast<float>(std::sqrt(var / static_cast<double>(w.size()))));
    }
    return c;
}

Network rewind(const Network& net, const InitCheckpoint& init, const MaskSet& masks) {
    return reset_from_init(net, init, masks, [](std::size_t, float w0) { return w0; });
}

Network finetune_carryover(const Network& net, const MaskSet& masks) {
    Network out = net;
    apply_masks(out, masks);
    return out;
}

Network sign_sigma_reinit(const Network& net, const InitCheckpoint& init, const MaskSet& masks) {
    return reset_from_init(net, init, masks,
                           [&](std::size_t layer, float w0) { return init.sigma[layer] * sign_of(w0); });
}

Network sign_reinit(const Network& net, const InitCheckpoint& init, const MaskSet& masks) {
    return reset_from_init(net, init, masks, [](std::size_t, float w0) { return sign_of(w0); });
}

Network apply_handling(Handling h, const Network& net, const InitCheckpoint& init, const MaskSet& masks) {
    switch (h) {
    case Handling::rewind:
        return rewind(net, init, masks);
    case Handling::finetune:
        return finetune_carryover(net, masks);
    case Handling::sign_sigma:
        return sign_sigma_reinit(net, init, masks);
    case Handling::sign_only:
        return sign_reinit(net, init, masks);
    }
    throw InputError("unknown weight handling");
}

} // namespace sparselab
