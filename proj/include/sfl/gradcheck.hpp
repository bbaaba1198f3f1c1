#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sfl/nn.hpp"

namespace sfl {

// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
// gradient is ~0 from dividing rounding noise by nothing.
double grad_relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradcheckCase {
  std::string name;
  ModelSpec spec;
};

// One model per layer kind (dense, relu, conv with stride/padding variants,
// maxpool, flatten).
std::vector<GradcheckCase> gradcheck_cases();

struct GradcheckInstance {
  ParamVector params;
  TensorF batch;
  std::vector<int> labels;
};

// Random parameters (non-zero biases), inputs and labels. Resamples until no
// ReLU input lies within `kink_margin` of 0 and no pooling window has a
// near-tie, so central differences never straddle a kink.
GradcheckInstance random_instance(const ModelSpec& spec, std::uint64_t seed, std::size_t batch = 3,
                                  double kink_margin = 1e-3);

struct GradcheckReport {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
};

std::vector<GradcheckReport> run_gradcheck(std::size_t instances_per_case, std::uint64_t seed, double h = 1e-4);

}  // namespace sfl
