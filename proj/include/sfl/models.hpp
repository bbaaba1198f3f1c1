#pragma once

#include <cstddef>

#include "sfl/nn.hpp"

namespace sfl {

// Four-layer perceptron in -> 32 -> 32 -> 16 -> classes with ReLU between.
// Cuts v1/v2/v3 sit after the first, second and third hidden ReLU.
ModelSpec desk_mlp(std::size_t in_features, std::size_t num_classes);

// Two conv blocks (conv 3x3 pad 1, ReLU, maxpool 2) then two dense layers, on
// (channels, side, side) input; side must be divisible by 4. Cuts: v1 after the
// first maxpool, v2 after the second, v3 after the first dense layer's ReLU.
ModelSpec desk_cnn(std::size_t channels, std::size_t side, std::size_t num_classes);

}  // namespace sfl
