#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sfl/tensor.hpp"

namespace sfl {

struct Dense {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Non-overlapping pooling: stride equals the window, trailing rows/cols dropped.
struct MaxPool2d {
  std::size_t window = 2;
};

struct ReLU {};
struct Flatten {};

using LayerSpec = std::variant<Dense, Conv2d, MaxPool2d, ReLU, Flatten>;

std::string layer_name(const LayerSpec& layer);

struct ModelSpec {
  Shape input_shape;  // per-sample, no batch dimension
  std::vector<LayerSpec> layers;
  // Width of the final layer. 0 marks a headless fragment (client half of a split).
  std::size_t num_classes = 0;
  std::map<std::string, std::size_t> cut_presets;
};

// Per-sample shapes: result[0] is the input, result[i + 1] the output of layer i.
// Throws ShapeError naming the offending layer pair.
std::vector<Shape> infer_shapes(const ModelSpec& spec);

// Full structural check: shapes, positive dimensions, class count, cut presets.
void validate(const ModelSpec& spec);

struct LayerSlot {
  std::size_t offset = 0;
  std::size_t weight_count = 0;
  std::size_t bias_count = 0;
  Shape weight_shape;

  std::size_t size() const { return weight_count + bias_count; }
  bool operator==(const LayerSlot&) const = default;
};

// Where each layer's parameters live inside the flat vector. Weights precede
// biases; layers appear in model order.
struct ParamLayout {
  std::vector<LayerSlot> slots;
  std::size_t total = 0;

  bool operator==(const ParamLayout&) const = default;
};

ParamLayout make_layout(const ModelSpec& spec);

struct ParamVector {
  ParamLayout layout;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const ParamVector&) const = default;
};

struct LayerParams {
  TensorF weights;
  TensorF bias;
};

std::vector<LayerParams> unflatten(const ParamVector& params);
ParamVector flatten(const ParamLayout& layout, const std::vector<LayerParams>& layers);

// Glorot-uniform weights, zero biases.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

struct ForwardCache {
  // activations[0] is the batch, activations[i + 1] the output of layer i.
  std::vector<TensorF> activations;

  const TensorF& output() const { return activations.back(); }
};

ForwardCache forward(const ModelSpec& spec, const ParamVector& params, const TensorF& batch);

struct LossResult {
  double loss = 0.0;
  TensorF logit_grad;  // d(mean loss)/d(logits)
};

LossResult softmax_cross_entropy(const TensorF& logits, std::span<const int> labels);

struct LayerGrads {
  ParamVector grad;
  TensorF input_grad;
};

// Pushes `output_grad` back through every layer of `spec`.
LayerGrads backprop(const ModelSpec& spec, const ParamVector& params, const ForwardCache& cache,
                    const TensorF& output_grad);

struct BackwardResult {
  ParamVector grad;
  TensorF input_grad;
  double loss = 0.0;
};

BackwardResult backward(const ModelSpec& spec, const ParamVector& params, const ForwardCache& cache,
                        std::span<const int> labels);

double compute_loss(const ModelSpec& spec, const ParamVector& params, const TensorF& batch,
                    std::span<const int> labels);

// Central differences, one coordinate at a time. Test oracle.
ParamVector finite_diff_grad(const ModelSpec& spec, const ParamVector& params, const TensorF& batch,
                             std::span<const int> labels, double h);

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr);

// In-place variant used by the training loops.
void sgd_step_inplace(ParamVector& params, const ParamVector& grad, double lr);

}  // namespace sfl
