#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "sfl/aggregation.hpp"
#include "sfl/attacks.hpp"
#include "sfl/config.hpp"
#include "sfl/data.hpp"
#include "sfl/nn.hpp"
#include "sfl/split.hpp"

namespace sfl {

struct RoundContext {
  std::size_t round = 0;
  std::vector<std::size_t> selected;       // ascending
  std::vector<std::size_t> malicious_set;  // ascending, fixed for the run
  double lr = 0.05;
  std::size_t n_clients = 0;
  std::size_t m_round = 0;  // |selected ∩ malicious_set|
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  std::size_t workers = 1;

  bool is_malicious(std::size_t client) const;
};

RoundContext make_round_context(std::size_t round, std::vector<std::size_t> selected,
                                std::vector<std::size_t> malicious_set, std::size_t n_clients, double lr,
                                std::size_t batch_size, std::uint64_t seed, std::size_t workers = 1);

// Lowest `count` ids after a seeded shuffle of all ids, returned ascending.
std::vector<std::size_t> choose_malicious(std::size_t n_clients, std::size_t count, std::uint64_t seed);

struct ClientState {
  std::size_t client_id = 0;
  std::vector<std::size_t> shard;
  ParamVector params;  // full model (FL) or client half (SplitFed)
};

struct ServerState {
  ServerHalf half;
};

// Shared, read-only inputs of a round.
struct RoundInputs {
  const ModelSpec* spec = nullptr;  // full model
  const Dataset* train = nullptr;
  AttackSpec attack;
  Defense defense = Defense::FedAvg;
};

struct RoundOutcome {
  ParamVector global;  // full model (FL) or client half (SplitFed)
  double loss = 0.0;   // mean training loss over the round's batches
  std::size_t attack_dim = 0;
  bool attacked = false;
  std::optional<GammaSearchResult> search;
};

// Mini-batch order of one client's shard for one round.
std::vector<std::vector<std::size_t>> client_batches(const std::vector<std::size_t>& shard, std::size_t batch_size,
                                                     std::uint64_t seed, std::size_t round, std::size_t client);

// One local epoch of mini-batch SGD on a full model. Returns the mean batch loss.
double local_epoch(const ModelSpec& spec, ParamVector& params, const Dataset& train,
                   const std::vector<std::vector<std::size_t>>& batches, double lr);

RoundOutcome run_fl_round(const RoundContext& ctx, std::vector<ClientState>& clients, const ParamVector& global,
                          const RoundInputs& in);

RoundOutcome run_splitfed_round(const RoundContext& ctx, std::vector<ClientState>& clients, ServerState& server,
                                const ParamVector& client_global, const RoundInputs& in);

double evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& test);

struct RoundRecord {
  std::size_t round = 0;
  std::optional<double> test_accuracy;  // in [0, 1], on evaluation rounds
  double loss = 0.0;
  std::optional<double> gamma;
  std::optional<double> deviation;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<RoundRecord> records;
  std::size_t attack_dim = 0;
  ParamVector final_params;  // full model
};

// Builds data, model and partition from the config and runs all rounds.
// `workers` only changes scheduling; results are identical for any value.
TrainResult train(const ExperimentConfig& cfg, std::size_t workers = 1);

// The dataset and model a config resolves to.
struct Setup {
  ModelSpec spec;
  TrainTest data;
};
Setup build_setup(const ExperimentConfig& cfg);

}  // namespace sfl
