#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sfl/aggregation.hpp"

namespace sfl {

enum class PerturbKind { StdDev, UnitVec, InverseSign };

std::string perturb_name(PerturbKind kind);

struct NoAttack {
  bool operator==(const NoAttack&) const = default;
};

// Little-is-enough: every malicious client submits mu + z * sigma.
struct LieAttack {
  double z = 1.0;
  bool operator==(const LieAttack&) const = default;
};

// Aggregation-rule-tailored attack: benign mean + gamma * perturbation, with
// gamma maximised against the target rule.
struct AgrOptAttack {
  PerturbKind perturbation = PerturbKind::StdDev;
  double gamma_init = 10.0;
  double tau = 1e-5;
  std::optional<AggregationRule> target_rule;  // unset: the deployed rule
  bool operator==(const AgrOptAttack&) const = default;
};

struct AttackSpec {
  std::variant<NoAttack, LieAttack, AgrOptAttack> kind;
  std::size_t attack_start_round = 0;

  bool active() const { return !std::holds_alternative<NoAttack>(kind); }
  bool operator==(const AttackSpec&) const = default;
};

void validate(const AttackSpec& spec);

struct GammaSearchResult {
  double gamma = 0.0;
  double deviation = 0.0;
  std::size_t evaluations = 0;
};

std::vector<double> benign_mean(const UpdateMatrix& benign);

std::vector<double> perturbation_vector(PerturbKind kind, const UpdateMatrix& benign);

// grad_b + gamma * grad_p
std::vector<double> craft_malicious(std::span<const double> grad_b, std::span<const double> grad_p,
                                    double gamma);

// || benign mean - rule(benign rows + m copies of the crafted update) ||_2
double agr_deviation(const UpdateMatrix& benign, std::size_t m, PerturbKind kind, double gamma,
                     const AggregationRule& rule);

// Halving search for the largest gamma that keeps the deviation at its best
// value seen. gamma stays inside [0, 2 * gamma_init).
GammaSearchResult gamma_search(const UpdateMatrix& benign, std::size_t m, PerturbKind kind,
                               const AggregationRule& rule, double gamma_init, double tau);

std::vector<double> lie_update(const UpdateMatrix& benign, double z);

// What the m malicious clients of a round submit.
struct CraftedUpdate {
  std::vector<double> values;
  std::optional<GammaSearchResult> search;
};

CraftedUpdate craft_round_update(const AttackSpec& spec, const UpdateMatrix& benign, std::size_t m,
                                 const AggregationRule& deployed);

}  // namespace sfl
