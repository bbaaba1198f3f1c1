#include "sfl/models.hpp"

#include "sfl/error.hpp"

namespace sfl {

ModelSpec desk_mlp(std::size_t in_features, std::size_t num_classes) {
  ModelSpec spec;
  spec.input_shape = {in_features};
  spec.num_classes = num_classes;
  spec.layers = {Dense{in_features, 32}, ReLU{}, Dense{32, 32}, ReLU{},
                 Dense{32, 16},          ReLU{}, Dense{16, num_classes}};
  spec.cut_presets = {{"v1", 2}, {"v2", 4}, {"v3", 6}};
  validate(spec);
  return spec;
}

ModelSpec desk_cnn(std::size_t channels, std::size_t side, std::size_t num_classes) {
  if (side < 4 || side % 4 != 0)
    throw ValidationError("cnn input side " + std::to_string(side) + " must be a positive multiple of 4");
  const std::size_t pooled = side / 4;
  ModelSpec spec;
  spec.input_shape = {channels, side, side};
  spec.num_classes = num_classes;
  spec.layers = {Conv2d{channels, 4, 3, 1, 1}, ReLU{},  MaxPool2d{2},
                 Conv2d{4, 8, 3, 1, 1},        ReLU{},  MaxPool2d{2},
                 Flatten{},                    Dense{8 * pooled * pooled, 16},
                 ReLU{},                       Dense{16, num_classes}};
  spec.cut_presets = {{"v1", 3}, {"v2", 6}, {"v3", 9}};
  validate(spec);
  return spec;
}

}  // namespace sfl
