#pragma once

#include "sparselab/architecture.hpp"
#include "sparselab/dataset.hpp"
#include "sparselab/mask.hpp"
#include "sparselab/rng.hpp"
#include "sparselab/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sparselab {

struct Parameter {
    std::string name;
    std::size_t layer_index = 0;
    Tensor weight;
    Tensor bias;

    friend bool operator==(const Parameter&, const Parameter&) = default;
};

struct Network {
    ArchitectureSpec arch;
    std::vector<Parameter> params;  // one per prunable layer, architecture order

    const Parameter& param(const std::string& name) const;
    Parameter& param(const std::string& name);
    std::size_t parameter_count() const;

    friend bool operator==(const Network&, const Network&) = default;
};

bool bitwise_equal(const Network& a, const Network& b);

// Weights and biases drawn i.i.d. uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)],
// layer by layer, weight elements then bias elements, row-major.
Network init_network(const ArchitectureSpec& arch, RngStream& rng);
Network zero_network(const ArchitectureSpec& arch);

struct Gradients {
    std::vector<Tensor> weight;
    std::vector<Tensor> bias;

    static Gradients zeros_like(const Network& net);
};

struct LossAndGradients {
    Gradients gradients;
    float loss = 0.0f;
};

// Logits (B, num_classes) for a batch shaped (B, input_shape...).
Tensor forward(const Network& net, const Tensor& batch);
// Mean softmax cross-entropy and its parameter gradients.
LossAndGradients backward(const Network& net, const Tensor& batch, std::span<const std::uint8_t> labels);
// Row-wise softmax of (B, K) logits.
Tensor softmax(const Tensor& logits);

// w <- w - lr * g on kept weights, pruned weights forced to exactly +0;
// biases updated unmasked.
void sgd_step(Network& net, const Gradients& grads, float lr, const MaskSet& masks);
// Zeroes every pruned weight.
void apply_masks(Network& net, const MaskSet& masks);

struct TrainOptions {
    std::size_t epochs = 30;
    float lr = 0.01f;
    std::size_t batch_size = 32;
    std::size_t eval_batch_size = 500;
    // Called after each epoch (1-based) with the current network.
    std::function<void(std::size_t epoch, const Network& net)> on_epoch_end;
};

struct TrainResult {
    std::vector<double> epoch_accuracy;  // percent on the eval set; empty without one
    std::vector<double> epoch_loss;      // mean training loss
};

// Mini-batch SGD; one fresh permutation from `shuffle` per epoch, trailing
// partial batch kept. Deterministic in all inputs.
TrainResult train(Network& net, const MaskSet& masks, const Dataset& train_set, const Dataset* eval_set,
                  const TrainOptions& options, RngStream& shuffle);

// Logits for a whole dataset, evaluated in chunks; bitwise independent of
// the chunk size.
Tensor predict_logits(const Network& net, const Dataset& data, std::size_t chunk = 500);
// Percent of examples whose argmax (lowest index on ties) equals the label.
double accuracy(const Network& net, const Dataset& data, std::size_t chunk = 500);
std::vector<std::uint32_t> argmax_rows(const Tensor& scores);

} // namespace sparselab
