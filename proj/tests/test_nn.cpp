#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "sfl/error.hpp"
#include "sfl/gradcheck.hpp"
#include "sfl/models.hpp"
#include "sfl/nn.hpp"

using namespace sfl;

namespace {

ModelSpec single(LayerSpec layer, Shape in, std::size_t classes = 0) {
  ModelSpec s;
  s.input_shape = std::move(in);
  s.layers = {layer};
  s.num_classes = classes;
  return s;
}

}  // namespace

TEST_CASE("init_params is deterministic per seed") {
  const auto spec = desk_mlp(8, 4);
  CHECK(init_params(spec, 42) == init_params(spec, 42));
  CHECK_FALSE(init_params(spec, 42) == init_params(spec, 43));
}

TEST_CASE("Dense(2,3) has 9 parameters with zero biases") {
  const auto spec = single(Dense{2, 3}, {2}, 3);
  const auto p = init_params(spec, 42);
  REQUIRE(p.size() == 9);
  for (std::size_t i = 6; i < 9; ++i) CHECK(p.values[i] == 0.0);
}

TEST_CASE("Glorot bound holds for Dense(100,100)") {
  const auto p = init_params(single(Dense{100, 100}, {100}, 100), 42);
  const double bound = std::sqrt(6.0 / 200.0);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < 10000; ++i) max_abs = std::max(max_abs, std::abs(p.values[i]));
  CHECK(max_abs <= bound);
  CHECK(max_abs > 0.9 * bound);  // the whole range is used
}

TEST_CASE("invalid model names the offending layer pair") {
  ModelSpec s;
  s.input_shape = {4};
  s.layers = {Dense{4, 5}, ReLU{}, Dense{6, 2}};
  s.num_classes = 2;
  try {
    init_params(s, 1);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("layer 1 (ReLU) -> layer 2 (Dense(6,2))") != std::string::npos);
  }
}

TEST_CASE("cut presets must be increasing and inside [1, L-1]") {
  auto s = desk_mlp(8, 4);
  s.cut_presets["v3"] = 7;
  CHECK_THROWS_AS(validate(s), ShapeError);
  s = desk_mlp(8, 4);
  s.cut_presets["v2"] = 1;
  CHECK_THROWS_AS(validate(s), ShapeError);
}

TEST_CASE("forward hand-arithmetic examples") {
  SUBCASE("dense") {
    const auto spec = single(Dense{2, 1}, {2}, 1);
    ParamVector p{make_layout(spec), {1.0, 1.0, 0.0}};
    CHECK(forward(spec, p, TensorF({1, 2}, {1.0, 2.0})).output().values == std::vector<double>{3.0});
  }
  SUBCASE("maxpool") {
    const auto spec = single(MaxPool2d{2}, {1, 2, 2});
    ParamVector p{make_layout(spec), {}};
    CHECK(forward(spec, p, TensorF({1, 1, 2, 2}, {1, 2, 3, 4})).output().values == std::vector<double>{4.0});
  }
  SUBCASE("conv") {
    const auto spec = single(Conv2d{1, 1, 2, 1, 0}, {1, 2, 2});
    ParamVector p{make_layout(spec), {1, 1, 1, 1, 0}};
    const auto out = forward(spec, p, TensorF({1, 1, 2, 2}, {1, 2, 3, 4})).output();
    CHECK(out.shape == Shape{1, 1, 1, 1});
    CHECK(out.values == std::vector<double>{10.0});
  }
  SUBCASE("conv padding keeps the border") {
    const auto spec = single(Conv2d{1, 1, 3, 1, 1}, {1, 2, 2});
    ParamVector p{make_layout(spec), std::vector<double>(10, 0.0)};
    p.values[4] = 1.0;  // centre tap: identity
    CHECK(forward(spec, p, TensorF({1, 1, 2, 2}, {1, 2, 3, 4})).output().values == std::vector<double>{1, 2, 3, 4});
  }
}

TEST_CASE("forward rejects a mis-shaped batch") {
  const auto spec = desk_mlp(8, 4);
  const auto p = init_params(spec, 1);
  CHECK_THROWS_AS(forward(spec, p, TensorF({2, 7})), ShapeError);
  CHECK_THROWS_AS(forward(spec, p, TensorF({0, 8})), ShapeError);
}

TEST_CASE("zero weights on a balanced 2-class batch give loss ln 2") {
  ModelSpec spec;
  spec.input_shape = {3};
  spec.layers = {Dense{3, 4}, ReLU{}, Dense{4, 2}};
  spec.num_classes = 2;
  ParamVector p{make_layout(spec), std::vector<double>(make_layout(spec).total, 0.0)};
  const TensorF x({2, 3}, {1, 2, 3, -1, 0, 4});
  const std::vector<int> y{0, 1};
  const auto b = backward(spec, p, forward(spec, p, x), y);
  CHECK(b.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("a confident correct prediction has ~0 loss and ~0 gradient") {
  const auto spec = single(Dense{1, 2}, {1}, 2);
  ParamVector p{make_layout(spec), {50.0, -50.0, 0.0, 0.0}};
  const auto b = backward(spec, p, forward(spec, p, TensorF({1, 1}, {1.0})), std::vector<int>{0});
  CHECK(b.loss < 1e-30);
  for (double g : b.grad.values) CHECK(std::abs(g) < 1e-30);
}

TEST_CASE("backward rejects a stale cache") {
  const auto spec = desk_mlp(8, 4);
  const auto p = init_params(spec, 1);
  const auto cache = forward(spec, p, TensorF({3, 8}));
  CHECK_THROWS_AS(backward(spec, p, cache, std::vector<int>{0, 1}), ShapeError);
}

TEST_CASE("finite differences on Dense(1->1)") {
  ModelSpec spec = single(Dense{1, 2}, {1}, 2);
  ParamVector p{make_layout(spec), {0.7, -0.3, 0.1, 0.2}};
  const TensorF x({1, 1}, {1.5});
  const std::vector<int> y{1};
  const auto analytic = backward(spec, p, forward(spec, p, x), y).grad;
  const auto numeric = finite_diff_grad(spec, p, x, y, 1e-4);
  for (std::size_t i = 0; i < analytic.size(); ++i)
    CHECK(grad_relative_error(analytic.values[i], numeric.values[i]) < 1e-6);
  CHECK_THROWS_AS(finite_diff_grad(spec, p, x, y, 0.0), ValidationError);
}

TEST_CASE("backprop matches finite differences for every layer kind") {
  for (const auto& r : run_gradcheck(20, 7)) {
    INFO(r.name);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("ReLU subgradient at 0 is 0 and maxpool routes ties to the first maximum") {
  ModelSpec relu = single(ReLU{}, {3});
  ParamVector none{make_layout(relu), {}};
  const auto c = forward(relu, none, TensorF({1, 3}, {-1.0, 0.0, 2.0}));
  CHECK(backprop(relu, none, c, TensorF({1, 3}, {1, 1, 1})).input_grad.values == std::vector<double>{0, 0, 1});

  ModelSpec pool = single(MaxPool2d{2}, {1, 2, 2});
  const auto pc = forward(pool, ParamVector{make_layout(pool), {}}, TensorF({1, 1, 2, 2}, {5, 5, 1, 5}));
  CHECK(backprop(pool, ParamVector{make_layout(pool), {}}, pc, TensorF({1, 1, 1, 1}, {1.0})).input_grad.values ==
        std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("sgd_step examples") {
  ModelSpec spec = single(Dense{1, 1}, {1}, 1);
  const auto layout = make_layout(spec);
  ParamVector p{layout, {1.0, 1.0}};
  CHECK(sgd_step(p, ParamVector{layout, {1.0, -1.0}}, 0.5).values == std::vector<double>{0.5, 1.5});
  CHECK(sgd_step(p, ParamVector{layout, {0.0, 0.0}}, 0.5) == p);
  const ParamVector g{layout, {0.25, -0.75}};
  const auto twice = sgd_step(sgd_step(p, g, 0.1), g, 0.1);
  const auto once = sgd_step(p, g, 0.2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(twice.values[i] == doctest::Approx(once.values[i]).epsilon(1e-15));
  CHECK_THROWS_AS(sgd_step(p, ParamVector{make_layout(single(Dense{1, 2}, {1}, 2)), {0, 0, 0, 0}}, 0.1), ShapeError);
}

TEST_CASE("flatten(unflatten(p)) is bit-identical") {
  for (const auto& c : gradcheck_cases()) {
    const auto p = random_instance(c.spec, 3).params;
    CHECK(flatten(p.layout, unflatten(p)) == p);
  }
}

TEST_CASE("forward is deterministic and the loss is non-negative") {
  std::mt19937_64 eng(5);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (const auto& c : gradcheck_cases()) {
    for (int trial = 0; trial < 5; ++trial) {
      auto inst = random_instance(c.spec, eng());
      for (double& v : inst.params.values) v += normal(eng);
      const auto a = forward(c.spec, inst.params, inst.batch);
      const auto b = forward(c.spec, inst.params, inst.batch);
      CHECK(a.activations == b.activations);
      CHECK(softmax_cross_entropy(a.output(), inst.labels).loss >= 0.0);
    }
  }
}
