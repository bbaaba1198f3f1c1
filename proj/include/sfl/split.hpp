#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sfl/nn.hpp"

namespace sfl {

// Client half = layers [0, layer_index), server half = layers [layer_index, L).
struct CutPoint {
  std::size_t layer_index = 0;
};

struct ClientHalf {
  ModelSpec spec;  // headless fragment
  ParamVector params;
};

struct ServerHalf {
  ModelSpec spec;  // input_shape is the cut-layer activation shape
  ParamVector params;
};

struct SplitModel {
  CutPoint cut;
  ClientHalf client;
  ServerHalf server;
};

// Cut-layer activations plus what the client keeps to finish backprop.
struct SmashedBatch {
  TensorF activations;
  ForwardCache client_cache;
  std::vector<int> labels;  // travel with the activations; the server owns the loss
};

struct ServerStepResult {
  TensorF cut_grad;  // d loss / d activations, at the pre-step server parameters
  ParamVector server_grad;
  double loss = 0.0;
};

void check_cut(const ModelSpec& spec, CutPoint cut);

// Resolves a named preset ("v1", "v2", "v3").
CutPoint preset_cut(const ModelSpec& spec, const std::string& name);

// The layer ranges of a split, without parameters.
ModelSpec client_fragment(const ModelSpec& spec, CutPoint cut);
ModelSpec server_fragment(const ModelSpec& spec, CutPoint cut);

SplitModel split_at(const ModelSpec& spec, const ParamVector& params, CutPoint cut);

// Concatenates client and server parameters back into a full-model vector.
ParamVector join_params(const ModelSpec& full_spec, const ParamVector& client, const ParamVector& server);

SmashedBatch client_forward(const ClientHalf& client, const TensorF& batch, std::span<const int> labels);

// Forward + loss + backprop on the server half, then one SGD step on
// server.params. The returned gradients are taken before the step.
ServerStepResult server_step(ServerHalf& server, const SmashedBatch& smashed, double lr);

// Finishes backprop through the client half and applies one SGD step.
// Returns the client-half gradient.
ParamVector client_backward(ClientHalf& client, const SmashedBatch& smashed, const TensorF& cut_grad,
                            double lr);

inline SmashedBatch client_forward(const SplitModel& sm, const TensorF& batch, std::span<const int> labels) {
  return client_forward(sm.client, batch, labels);
}
inline ServerStepResult server_step(SplitModel& sm, const SmashedBatch& smashed, double lr) {
  return server_step(sm.server, smashed, lr);
}
inline ParamVector client_backward(SplitModel& sm, const SmashedBatch& smashed, const TensorF& cut_grad,
                                   double lr) {
  return client_backward(sm.client, smashed, cut_grad, lr);
}

}  // namespace sfl
