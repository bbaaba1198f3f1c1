#include "sfl/split.hpp"

#include "sfl/error.hpp"

namespace sfl {

void check_cut(const ModelSpec& spec, CutPoint cut) {
  const std::size_t L = spec.layers.size();
  if (L < 2 || cut.layer_index < 1 || cut.layer_index > L - 1)
    throw ValidationError("cut " + std::to_string(cut.layer_index) + " outside [1, " +
                          std::to_string(L == 0 ? 0 : L - 1) + "]");
}

CutPoint preset_cut(const ModelSpec& spec, const std::string& name) {
  auto it = spec.cut_presets.find(name);
  if (it == spec.cut_presets.end()) throw ValidationError("model has no cut preset '" + name + "'");
  return CutPoint{it->second};
}

ModelSpec client_fragment(const ModelSpec& spec, CutPoint cut) {
  check_cut(spec, cut);
  ModelSpec out;
  out.input_shape = spec.input_shape;
  out.layers.assign(spec.layers.begin(), spec.layers.begin() + std::ptrdiff_t(cut.layer_index));
  return out;
}

ModelSpec server_fragment(const ModelSpec& spec, CutPoint cut) {
  check_cut(spec, cut);
  ModelSpec out;
  out.input_shape = infer_shapes(spec)[cut.layer_index];
  out.layers.assign(spec.layers.begin() + std::ptrdiff_t(cut.layer_index), spec.layers.end());
  out.num_classes = spec.num_classes;
  return out;
}

SplitModel split_at(const ModelSpec& spec, const ParamVector& params, CutPoint cut) {
  validate(spec);
  check_cut(spec, cut);
  if (!(params.layout == make_layout(spec))) throw ShapeError("split_at: parameters do not match model");

  SplitModel sm;
  sm.cut = cut;
  sm.client.spec = client_fragment(spec, cut);
  sm.server.spec = server_fragment(spec, cut);
  const ParamLayout client_layout = make_layout(sm.client.spec);
  const auto split_point = params.values.begin() + std::ptrdiff_t(client_layout.total);
  sm.client.params = ParamVector{client_layout, {params.values.begin(), split_point}};
  sm.server.params = ParamVector{make_layout(sm.server.spec), {split_point, params.values.end()}};
  return sm;
}

ParamVector join_params(const ModelSpec& full_spec, const ParamVector& client, const ParamVector& server) {
  ParamVector full{make_layout(full_spec), client.values};
  full.values.insert(full.values.end(), server.values.begin(), server.values.end());
  if (full.values.size() != full.layout.total)
    throw ShapeError("join_params: " + std::to_string(full.values.size()) + " values for a model of " +
                     std::to_string(full.layout.total));
  return full;
}

SmashedBatch client_forward(const ClientHalf& client, const TensorF& batch, std::span<const int> labels) {
  if (batch.batch() == 0) throw ValidationError("client_forward: empty batch");
  if (labels.size() != batch.batch())
    throw ShapeError("client_forward: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch.batch()));
  SmashedBatch out;
  out.client_cache = forward(client.spec, client.params, batch);
  out.activations = out.client_cache.output();
  out.labels.assign(labels.begin(), labels.end());
  return out;
}

ServerStepResult server_step(ServerHalf& server, const SmashedBatch& smashed, double lr) {
  const Shape expected = server.spec.input_shape;
  if (smashed.activations.sample_shape() != expected)
    throw ShapeError("server_step: smashed data " + shape_str(smashed.activations.shape) +
                     " does not match cut shape (N," + shape_str(expected).substr(1));
  const ForwardCache cache = forward(server.spec, server.params, smashed.activations);
  BackwardResult b = backward(server.spec, server.params, cache, smashed.labels);
  sgd_step_inplace(server.params, b.grad, lr);
  return {std::move(b.input_grad), std::move(b.grad), b.loss};
}

ParamVector client_backward(ClientHalf& client, const SmashedBatch& smashed, const TensorF& cut_grad,
                            double lr) {
  if (cut_grad.shape != smashed.activations.shape)
    throw ShapeError("client_backward: cut gradient " + shape_str(cut_grad.shape) +
                     " does not match smashed data " + shape_str(smashed.activations.shape));
  LayerGrads g = backprop(client.spec, client.params, smashed.client_cache, cut_grad);
  sgd_step_inplace(client.params, g.grad, lr);
  return std::move(g.grad);
}

}  // namespace sfl
