#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "sfl/error.hpp"
#include "sfl/models.hpp"
#include "sfl/split.hpp"

using namespace sfl;

namespace {

struct Batch {
  TensorF x;
  std::vector<int> y;
};

Batch random_batch(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> normal;
  Shape shape{n};
  shape.insert(shape.end(), spec.input_shape.begin(), spec.input_shape.end());
  TensorF x(shape);
  for (double& v : x.values) v = normal(eng);
  std::vector<int> y(n);
  for (int& l : y) l = int(eng() % spec.num_classes);
  return {x, y};
}

}  // namespace

TEST_CASE("split then join is the identity") {
  const auto spec = desk_mlp(8, 4);
  const auto p = init_params(spec, 9);
  for (const char* name : {"v1", "v2", "v3"}) {
    const auto sm = split_at(spec, p, preset_cut(spec, name));
    CHECK(join_params(spec, sm.client.params, sm.server.params) == p);
  }
}

TEST_CASE("desk MLP client parameter counts") {
  const auto spec = desk_mlp(8, 4);
  const auto p = init_params(spec, 1);
  CHECK(p.size() == 1940);
  CHECK(split_at(spec, p, preset_cut(spec, "v1")).client.params.size() == 288);
  CHECK(split_at(spec, p, preset_cut(spec, "v2")).client.params.size() == 1344);
  CHECK(split_at(spec, p, preset_cut(spec, "v3")).client.params.size() == 1872);
}

TEST_CASE("cut outside [1, L-1] is rejected") {
  const auto spec = desk_mlp(8, 4);
  const auto p = init_params(spec, 1);
  CHECK_THROWS_AS(split_at(spec, p, CutPoint{0}), ValidationError);
  CHECK_THROWS_AS(split_at(spec, p, CutPoint{spec.layers.size()}), ValidationError);
  CHECK_THROWS_AS(preset_cut(spec, "v9"), ValidationError);
}

TEST_CASE("client_forward rejects an empty batch") {
  const auto spec = desk_mlp(8, 4);
  const auto sm = split_at(spec, init_params(spec, 1), preset_cut(spec, "v1"));
  CHECK_THROWS(client_forward(sm, TensorF({0, 8}), std::vector<int>{}));
}

TEST_CASE("server_step with lr 0 leaves the server untouched and returns the loss") {
  const auto spec = desk_mlp(8, 4);
  const auto p = init_params(spec, 4);
  auto sm = split_at(spec, p, preset_cut(spec, "v2"));
  const auto b = random_batch(spec, 5, 11);
  const auto before = sm.server.params;
  const auto smashed = client_forward(sm, b.x, b.y);
  const auto r = server_step(sm, smashed, 0.0);
  CHECK(sm.server.params == before);
  CHECK(r.loss == backward(spec, p, forward(spec, p, b.x), b.y).loss);
}

TEST_CASE("split training step equals full-model training bit-exactly") {
  const std::vector<ModelSpec> specs{desk_mlp(8, 4), desk_cnn(1, 8, 3)};
  for (const auto& spec : specs) {
    for (const auto& [name, layer] : spec.cut_presets) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(name);
        CAPTURE(seed);
        const auto p = init_params(spec, seed);
        const auto b = random_batch(spec, 6, seed + 100);
        const double lr = 0.05;

        const auto full = backward(spec, p, forward(spec, p, b.x), b.y);
        const auto expected = sgd_step(p, full.grad, lr);

        auto sm = split_at(spec, p, CutPoint{layer});
        const auto smashed = client_forward(sm, b.x, b.y);
        const auto sr = server_step(sm, smashed, lr);
        client_backward(sm, smashed, sr.cut_grad, lr);
        CHECK(sr.loss == full.loss);
        CHECK(join_params(spec, sm.client.params, sm.server.params) == expected);
      }
    }
  }
}

TEST_CASE("cut gradient is taken at the pre-step server parameters") {
  const auto spec = desk_mlp(8, 4);
  const auto p = init_params(spec, 2);
  const auto b = random_batch(spec, 4, 3);
  auto a = split_at(spec, p, preset_cut(spec, "v1"));
  auto c = split_at(spec, p, preset_cut(spec, "v1"));
  const auto sa = client_forward(a, b.x, b.y);
  const auto g0 = server_step(a, sa, 0.0).cut_grad;
  const auto g1 = server_step(c, client_forward(c, b.x, b.y), 1.0).cut_grad;
  CHECK(g0 == g1);
}
