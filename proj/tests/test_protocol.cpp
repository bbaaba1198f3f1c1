#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "sfl/models.hpp"
#include "sfl/protocol.hpp"

using namespace sfl;

namespace {

struct Fixture {
  ModelSpec spec = desk_mlp(8, 4);
  TrainTest data = gen_blobs(42, BlobsConfig{4, 8, 60, 1.0});
  ParamVector init = init_params(spec, 42);
};

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Plain mini-batch SGD over the same batches a client would use.
ParamVector centralized(const Fixture& f, const std::vector<std::size_t>& shard, std::size_t bs, std::uint64_t seed,
                        std::size_t rounds, double lr) {
  ParamVector p = f.init;
  for (std::size_t r = 0; r < rounds; ++r) {
    for (const auto& rows : client_batches(shard, bs, seed, r, 0)) {
      const auto x = gather_rows(f.data.train.features, rows);
      const auto y = gather_labels(f.data.train.labels, rows);
      p = sgd_step(p, backward(f.spec, p, forward(f.spec, p, x), y).grad, lr);
    }
  }
  return p;
}

RoundInputs inputs(const Fixture& f, AttackSpec attack = {}, Defense d = Defense::FedAvg) {
  RoundInputs in;
  in.spec = &f.spec;
  in.train = &f.data.train;
  in.attack = attack;
  in.defense = d;
  return in;
}

}  // namespace

TEST_CASE("choose_malicious and round context") {
  const auto m = choose_malicious(20, 4, 42);
  CHECK(m.size() == 4);
  CHECK(std::is_sorted(m.begin(), m.end()));
  CHECK(m == choose_malicious(20, 4, 42));
  CHECK(choose_malicious(20, 0, 42).empty());
  const auto ctx = make_round_context(0, {0, 1, 2, 3, 4, 5}, {1, 5, 9}, 10, 0.1, 8, 1);
  CHECK(ctx.m_round == 2);
  CHECK(ctx.is_malicious(5));
  CHECK_FALSE(ctx.is_malicious(2));
}

TEST_CASE("client batches cover the shard once") {
  std::vector<std::size_t> shard{5, 9, 2, 7, 11, 3, 8};
  const auto b = client_batches(shard, 3, 1, 0, 4);
  CHECK(b.size() == 3);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  auto s = shard;
  std::sort(s.begin(), s.end());
  CHECK(all == s);
  CHECK(client_batches(shard, 3, 1, 0, 4) == b);
}

TEST_CASE("one FL client without attack equals centralized SGD") {
  Fixture f;
  const auto shard = iota_ids(f.data.train.size());
  std::vector<ClientState> clients{{0, shard, f.init}};
  ParamVector global = f.init;
  const auto in = inputs(f);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto ctx = make_round_context(r, {0}, {}, 1, 0.05, 16, 42);
    global = run_fl_round(ctx, clients, global, in).global;
  }
  CHECK(global == centralized(f, shard, 16, 42, 3, 0.05));
}

TEST_CASE("one SplitFed client without attack equals centralized SGD, every cut") {
  Fixture f;
  const auto shard = iota_ids(f.data.train.size());
  const auto expected = centralized(f, shard, 16, 42, 2, 0.05);
  for (const auto& [name, layer] : f.spec.cut_presets) {
    CAPTURE(name);
    SplitModel sm = split_at(f.spec, f.init, CutPoint{layer});
    ServerState server{sm.server};
    ParamVector global = sm.client.params;
    std::vector<ClientState> clients{{0, shard, global}};
    const auto in = inputs(f);
    for (std::size_t r = 0; r < 2; ++r) {
      const auto ctx = make_round_context(r, {0}, {}, 1, 0.05, 16, 42);
      const auto out = run_splitfed_round(ctx, clients, server, global, in);
      global = out.global;
      CHECK(out.attack_dim == sm.client.params.size());
    }
    CHECK(join_params(f.spec, global, server.half.params) == expected);
  }
}

TEST_CASE("FL round is fed_avg over independent local epochs, then broadcast") {
  Fixture f;
  const auto shard = iota_ids(40);
  std::vector<ClientState> clients;
  for (std::size_t c = 0; c < 4; ++c) clients.push_back({c, shard, f.init});
  const auto ctx = make_round_context(0, {0, 1, 2, 3}, {}, 4, 0.05, 8, 42);
  const auto out = run_fl_round(ctx, clients, f.init, inputs(f));
  // Batch order depends on the client id.
  std::vector<ParamVector> solo;
  for (std::size_t c = 0; c < 4; ++c) {
    ParamVector p = f.init;
    local_epoch(f.spec, p, f.data.train, client_batches(shard, 8, 42, 0, c), 0.05);
    solo.push_back(p);
  }
  UpdateMatrix u(0, f.init.size());
  for (const auto& p : solo) u.append_row(p.values);
  CHECK(out.global.values == fed_avg(u));
  for (const auto& c : clients) CHECK(c.params == out.global);

  // Fully identical submissions: the mean of four equal vectors is that vector.
  UpdateMatrix same(0, f.init.size());
  for (int k = 0; k < 4; ++k) same.append_row(solo[0].values);
  CHECK(fed_avg(same) == solo[0].values);
}

TEST_CASE("AgrOpt against FedAvg shifts the benign mean by (m/n) gamma grad_p") {
  Fixture f;
  const std::size_t n = 5;
  const auto part = partition_iid(f.data.train.size(), n, 42);
  std::vector<ClientState> clients;
  for (std::size_t c = 0; c < n; ++c) clients.push_back({c, part.assignments[c], f.init});
  const auto ctx = make_round_context(0, iota_ids(n), {3}, n, 0.05, 16, 42);
  const AttackSpec attack{AgrOptAttack{}, 0};
  const auto out = run_fl_round(ctx, clients, f.init, inputs(f, attack));
  REQUIRE(out.attacked);
  REQUIRE(out.search.has_value());

  UpdateMatrix benign(0, f.init.size());
  for (std::size_t c = 0; c < n; ++c) {
    if (c == 3) continue;
    ParamVector p = f.init;
    local_epoch(f.spec, p, f.data.train, client_batches(part.assignments[c], 16, 42, 0, c), 0.05);
    benign.append_row(p.values);
  }
  const auto mu = benign_mean(benign);
  const auto gp = perturbation_vector(PerturbKind::StdDev, benign);
  const double g = out.search->gamma;
  for (std::size_t j = 0; j < mu.size(); ++j)
    CHECK(out.global.values[j] == doctest::Approx(mu[j] + 0.2 * g * gp[j]).epsilon(1e-12).scale(1.0));
}

TEST_CASE("attack space grows with the cut and equals the client-half size") {
  ExperimentConfig cfg;
  cfg.rounds = 1;
  cfg.attack = AttackSpec{AgrOptAttack{}, 0};
  cfg.defense = Defense::TrMean;
  std::size_t prev = 0;
  for (const char* cut : {"v1", "v2", "v3"}) {
    cfg.cut = cut;
    const auto res = train(cfg);
    CHECK(res.attack_dim > prev);
    prev = res.attack_dim;
  }
  cfg.mode = Mode::FL;
  CHECK(train(cfg).attack_dim == 1940);
}

TEST_CASE("train: zero rounds, determinism, worker independence") {
  ExperimentConfig cfg;
  cfg.rounds = 0;
  CHECK(train(cfg).records.empty());

  cfg.rounds = 4;
  cfg.n_clients = 10;
  cfg.clients_per_round = 6;
  cfg.defense = Defense::Median;
  cfg.attack = AttackSpec{AgrOptAttack{}, 0};
  for (Mode mode : {Mode::FL, Mode::SplitFed}) {
    cfg.mode = mode;
    const auto a = train(cfg, 1);
    const auto b = train(cfg, 3);
    REQUIRE(a.records.size() == 4);
    CHECK(a.final_params == b.final_params);
    for (std::size_t r = 0; r < 4; ++r) {
      CHECK(a.records[r].loss == b.records[r].loss);
      CHECK(a.records[r].test_accuracy == b.records[r].test_accuracy);
      CHECK(a.records[r].gamma == b.records[r].gamma);
    }
  }
}

TEST_CASE("evaluate") {
  // Identity weights on one-hot inputs predict perfectly.
  ModelSpec id;
  id.input_shape = {4};
  id.layers = {Dense{4, 4}};
  id.num_classes = 4;
  ParamVector p{make_layout(id), std::vector<double>(20, 0.0)};
  for (std::size_t k = 0; k < 4; ++k) p.values[k * 4 + k] = 1.0;
  Dataset onehot;
  onehot.num_classes = 4;
  onehot.features = TensorF({8, 4});
  for (std::size_t i = 0; i < 8; ++i) {
    onehot.labels.push_back(int(i % 4));
    onehot.features.values[i * 4 + i % 4] = 1.0;
  }
  CHECK(evaluate(id, p, onehot) == 1.0);

  ParamVector constant{make_layout(id), std::vector<double>(20, 0.0)};
  constant.values[16] = 1.0;  // bias of class 0
  CHECK(evaluate(id, constant, onehot) == 0.25);

  Dataset empty;
  empty.features = TensorF({0, 4});
  CHECK_THROWS(evaluate(id, p, empty));

  const auto ten = gen_blobs(5, BlobsConfig{10, 8, 100, 1.0});
  const auto spec10 = desk_mlp(8, 10);
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) mean += evaluate(spec10, init_params(spec10, s), ten.test) / 10.0;
  CHECK(std::abs(mean - 0.1) <= 0.05);
}
