#include "sfl/attacks.hpp"

#include <cmath>
#include <limits>

#include "sfl/error.hpp"

namespace sfl {

namespace {

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Benign rows followed by m slots for the malicious update, reused across
// evaluations of the objective.
class DeviationProbe {
 public:
  DeviationProbe(const UpdateMatrix& benign, std::size_t m, PerturbKind kind, const AggregationRule& rule)
      : m_(m), rule_(rule), mean_(benign_mean(benign)), perturb_(perturbation_vector(kind, benign)) {
    check_rule(rule, benign.rows() + m);
    for (std::size_t i = 0; i < benign.rows(); ++i) all_.append_row(benign.row(i));
    const std::vector<double> zero(benign.cols(), 0.0);
    for (std::size_t i = 0; i < m; ++i) all_.append_row(zero);
    first_malicious_ = benign.rows();
  }

  double operator()(double gamma) {
    const auto crafted = craft_malicious(mean_, perturb_, gamma);
    for (std::size_t i = 0; i < m_; ++i) {
      auto r = all_.row(first_malicious_ + i);
      std::copy(crafted.begin(), crafted.end(), r.begin());
    }
    return l2_distance(mean_, aggregate(rule_, all_));
  }

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& perturbation() const { return perturb_; }

 private:
  std::size_t m_;
  AggregationRule rule_;
  std::vector<double> mean_;
  std::vector<double> perturb_;
  UpdateMatrix all_;
  std::size_t first_malicious_ = 0;
};

}  // namespace

std::string perturb_name(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::StdDev: return "std";
    case PerturbKind::UnitVec: return "unit";
    case PerturbKind::InverseSign: return "sign";
  }
  return "?";
}

void validate(const AttackSpec& spec) {
  if (const auto* a = std::get_if<AgrOptAttack>(&spec.kind)) {
    if (!(a->gamma_init > 0.0)) throw ValidationError("agropt: gamma_init must be > 0");
    if (!(a->tau > 0.0)) throw ValidationError("agropt: tau must be > 0");
  }
  if (const auto* l = std::get_if<LieAttack>(&spec.kind)) {
    if (!std::isfinite(l->z)) throw ValidationError("lie: z must be finite");
  }
}

std::vector<double> benign_mean(const UpdateMatrix& benign) {
  if (benign.rows() == 0) throw ValidationError("benign_mean: no benign rows");
  return fed_avg(benign);
}

std::vector<double> perturbation_vector(PerturbKind kind, const UpdateMatrix& benign) {
  if (benign.rows() == 0) throw ValidationError("perturbation_vector: no benign rows");
  switch (kind) {
    case PerturbKind::StdDev: {
      auto p = update_stats(benign).std;
      for (double& v : p) v = -v;
      return p;
    }
    case PerturbKind::UnitVec: {
      auto p = benign_mean(benign);
      double norm = 0.0;
      for (double v : p) norm += v * v;
      norm = std::sqrt(norm);
      if (!(norm > 0.0)) throw ValidationError("perturbation_vector: unit direction undefined for a zero mean");
      for (double& v : p) v = -v / norm;
      return p;
    }
    case PerturbKind::InverseSign: {
      auto p = benign_mean(benign);
      for (double& v : p) v = v > 0.0 ? -1.0 : (v < 0.0 ? 1.0 : 0.0);
      return p;
    }
  }
  throw ValidationError("unknown perturbation kind");
}

std::vector<double> craft_malicious(std::span<const double> grad_b, std::span<const double> grad_p,
                                    double gamma) {
  if (grad_b.size() != grad_p.size())
    throw ValidationError("craft_malicious: dimension mismatch " + std::to_string(grad_b.size()) + " vs " +
                          std::to_string(grad_p.size()));
  std::vector<double> out(grad_b.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grad_b[i] + gamma * grad_p[i];
  return out;
}

double agr_deviation(const UpdateMatrix& benign, std::size_t m, PerturbKind kind, double gamma,
                     const AggregationRule& rule) {
  DeviationProbe probe(benign, m, kind, rule);
  return probe(gamma);
}

GammaSearchResult gamma_search(const UpdateMatrix& benign, std::size_t m, PerturbKind kind,
                               const AggregationRule& rule, double gamma_init, double tau) {
  if (!(gamma_init > 0.0)) throw ValidationError("gamma_search: gamma_init must be > 0");
  if (!(tau > 0.0)) throw ValidationError("gamma_search: tau must be > 0");
  if (benign.rows() == 0) throw ValidationError("gamma_search: no benign rows");

  DeviationProbe probe(benign, m, kind, rule);
  GammaSearchResult result;
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  double gamma = gamma_init;
  double step = gamma_init / 2.0;
  while (true) {
    const double dev = probe(gamma);
    ++result.evaluations;
    if (dev >= best - 1e-6 * std::abs(best)) {
      best = std::max(best, dev);
      if (!found || gamma > result.gamma) {
        result.gamma = gamma;
        result.deviation = dev;
        found = true;
      }
      gamma += step;
    } else {
      gamma -= step;
    }
    step /= 2.0;
    if (step < tau) break;
  }
  return result;
}

std::vector<double> lie_update(const UpdateMatrix& benign, double z) {
  if (benign.rows() == 0) throw ValidationError("lie_update: no benign rows");
  UpdateStats s = update_stats(benign);
  for (std::size_t j = 0; j < s.mean.size(); ++j) s.mean[j] += z * s.std[j];
  return s.mean;
}

CraftedUpdate craft_round_update(const AttackSpec& spec, const UpdateMatrix& benign, std::size_t m,
                                 const AggregationRule& deployed) {
  if (const auto* lie = std::get_if<LieAttack>(&spec.kind)) return {lie_update(benign, lie->z), std::nullopt};
  if (const auto* opt = std::get_if<AgrOptAttack>(&spec.kind)) {
    const AggregationRule target = opt->target_rule.value_or(deployed);
    GammaSearchResult r = gamma_search(benign, m, opt->perturbation, target, opt->gamma_init, opt->tau);
    return {craft_malicious(benign_mean(benign), perturbation_vector(opt->perturbation, benign), r.gamma), r};
  }
  throw ValidationError("craft_round_update: attack is disabled");
}

}  // namespace sfl
