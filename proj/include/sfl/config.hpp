#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "sfl/aggregation.hpp"
#include "sfl/attacks.hpp"
#include "sfl/data.hpp"

namespace sfl {

enum class Mode { FL, SplitFed };
enum class ModelPreset { Mlp, Cnn };
enum class Defense { FedAvg, TrMean, Median };

struct IdxSource {
  std::string train_images, train_labels, test_images, test_labels;
  bool operator==(const IdxSource&) const = default;
};

struct PartitionScheme {
  bool dirichlet = false;
  double alpha = 0.5;
  bool operator==(const PartitionScheme&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  Mode mode = Mode::SplitFed;
  ModelPreset model = ModelPreset::Mlp;
  std::string cut = "v1";
  std::variant<BlobsConfig, IdxSource> dataset = BlobsConfig{};
  PartitionScheme partition;
  std::size_t n_clients = 20;
  std::size_t clients_per_round = 20;
  double malicious_fraction = 0.2;
  std::size_t rounds = 200;
  double lr = 0.05;
  std::size_t batch_size = 32;
  Defense defense = Defense::FedAvg;
  AttackSpec attack;
  // Unset: 0 for IID partitions, rounds / 4 for Dirichlet partitions.
  std::optional<std::size_t> attack_start_round;
  std::size_t eval_every = 1;

  bool operator==(const ExperimentConfig&) const = default;
};

std::string to_string(Mode mode);
std::string to_string(ModelPreset model);
std::string to_string(Defense defense);
std::string to_string(const AttackSpec& attack);  // none | lie(z) | agropt(perturb,gamma_init,tau)
std::string to_string(const PartitionScheme& p);  // iid | dirichlet(alpha)

Mode parse_mode(const std::string& text);
Defense parse_defense(const std::string& text);
AttackSpec parse_attack(const std::string& text);

// Number of malicious clients out of n: ceil(fraction * n).
std::size_t malicious_count(double fraction, std::size_t n);

std::size_t resolved_attack_start(const ExperimentConfig& cfg);

// Trim count / rule for a round with m malicious participants.
AggregationRule round_rule(Defense defense, std::size_t m);

// Field-level checks; throws ValidationError naming the field.
void validate(const ExperimentConfig& cfg);

// Flat key=value text, '#' comments. Unknown keys and bad values throw
// ValidationError naming the key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical key=value rendering; parse_config(format_config(c)) == c.
std::string format_config(const ExperimentConfig& cfg);

// One-line canonical identity of a config.
std::string fingerprint(const ExperimentConfig& cfg);

// Applies a single key=value assignment.
void set_config_field(ExperimentConfig& cfg, const std::string& key, const std::string& value);

}  // namespace sfl
