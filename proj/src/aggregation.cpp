#include "sfl/aggregation.hpp"

#include <algorithm>
#include <cmath>

#include "sfl/error.hpp"

namespace sfl {

namespace {

void require_rows(const UpdateMatrix& u, const char* op) {
  if (u.rows() == 0) throw ValidationError(std::string(op) + ": empty update matrix");
}

// Applies `reduce` to each sorted column.
template <class Reduce>
std::vector<double> per_sorted_column(const UpdateMatrix& u, Reduce reduce) {
  std::vector<double> out(u.cols());
  std::vector<double> col(u.rows());
  for (std::size_t j = 0; j < u.cols(); ++j) {
    for (std::size_t i = 0; i < u.rows(); ++i) col[i] = u.at(i, j);
    std::sort(col.begin(), col.end());
    out[j] = reduce(col);
  }
  return out;
}

double mean_of(const std::vector<double>& sorted, std::size_t lo, std::size_t hi) {
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += sorted[i];
  return acc / double(hi - lo);
}

}  // namespace

UpdateMatrix::UpdateMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0), client_ids_(rows, -1) {}

UpdateMatrix UpdateMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  UpdateMatrix u;
  for (const auto& r : rows) u.append_row(r);
  return u;
}

void UpdateMatrix::append_row(std::span<const double> values, int client_id) {
  if (rows_ == 0 && cols_ == 0) {
    cols_ = values.size();
  } else if (values.size() != cols_) {
    throw ValidationError("update row of dimension " + std::to_string(values.size()) +
                          " does not match matrix dimension " + std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  client_ids_.push_back(client_id);
  ++rows_;
}

std::string AggregationRule::name() const {
  switch (kind) {
    case Kind::FedAvg: return "fedavg";
    case Kind::TrimmedMean: return "trmean(" + std::to_string(trim) + ")";
    case Kind::Median: return "median";
  }
  return "?";
}

std::vector<double> fed_avg(const UpdateMatrix& u) {
  require_rows(u, "fed_avg");
  return per_sorted_column(u, [](const std::vector<double>& c) { return mean_of(c, 0, c.size()); });
}

std::vector<double> trimmed_mean(const UpdateMatrix& u, std::size_t m) {
  require_rows(u, "trimmed_mean");
  if (u.rows() <= 2 * m)
    throw ValidationError("trimmed_mean: needs more than 2m=" + std::to_string(2 * m) + " rows, got " +
                          std::to_string(u.rows()));
  return per_sorted_column(u, [m](const std::vector<double>& c) { return mean_of(c, m, c.size() - m); });
}

std::vector<double> coordinate_median(const UpdateMatrix& u) {
  require_rows(u, "coordinate_median");
  return per_sorted_column(u, [](const std::vector<double>& c) {
    const std::size_t n = c.size();
    return n % 2 == 1 ? c[n / 2] : 0.5 * (c[n / 2 - 1] + c[n / 2]);
  });
}

UpdateStats update_stats(const UpdateMatrix& u) {
  require_rows(u, "update_stats");
  UpdateStats s{fed_avg(u), std::vector<double>(u.cols(), 0.0)};
  for (std::size_t j = 0; j < u.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < u.rows(); ++i) {
      const double d = u.at(i, j) - s.mean[j];
      acc += d * d;
    }
    s.std[j] = std::sqrt(acc / double(u.rows()));
  }
  return s;
}

void check_rule(const AggregationRule& rule, std::size_t n) {
  if (n == 0) throw ValidationError(rule.name() + ": no rows to aggregate");
  if (rule.kind == AggregationRule::Kind::TrimmedMean && n <= 2 * rule.trim)
    throw ValidationError("trimmed mean with m=" + std::to_string(rule.trim) + " needs more than " +
                          std::to_string(2 * rule.trim) + " rows, got " + std::to_string(n));
}

std::vector<double> aggregate(const AggregationRule& rule, const UpdateMatrix& u) {
  switch (rule.kind) {
    case AggregationRule::Kind::FedAvg: return fed_avg(u);
    case AggregationRule::Kind::TrimmedMean: return rule.trim == 0 ? fed_avg(u) : trimmed_mean(u, rule.trim);
    case AggregationRule::Kind::Median: return coordinate_median(u);
  }
  throw ValidationError("unknown aggregation rule");
}

}  // namespace sfl
