#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sfl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles.
struct TensorF {
  Shape shape;
  std::vector<double> values;

  TensorF() = default;
  explicit TensorF(Shape s);
  TensorF(Shape s, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  // Leading (batch) dimension, 0 for a rank-0 tensor.
  std::size_t batch() const { return shape.empty() ? 0 : shape.front(); }
  // Shape without the leading dimension.
  Shape sample_shape() const { return shape.empty() ? Shape{} : Shape(shape.begin() + 1, shape.end()); }

  bool operator==(const TensorF&) const = default;
};

}  // namespace sfl
