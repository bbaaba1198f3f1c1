#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sfl {

// n client update vectors of dimension d, stored row-major.
class UpdateMatrix {
 public:
  UpdateMatrix() = default;
  UpdateMatrix(std::size_t rows, std::size_t cols);

  static UpdateMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  void append_row(std::span<const double> values, int client_id = -1);

  const std::vector<int>& client_ids() const { return client_ids_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
  std::vector<int> client_ids_;
};

struct UpdateStats {
  std::vector<double> mean;
  std::vector<double> std;  // population form
};

struct AggregationRule {
  enum class Kind { FedAvg, TrimmedMean, Median };
  Kind kind = Kind::FedAvg;
  std::size_t trim = 0;  // TrimmedMean only

  static AggregationRule fed_avg() { return {Kind::FedAvg, 0}; }
  static AggregationRule trimmed_mean(std::size_t m) { return {Kind::TrimmedMean, m}; }
  static AggregationRule median() { return {Kind::Median, 0}; }

  std::string name() const;
  bool operator==(const AggregationRule&) const = default;
};

// Column sums are taken over the sorted column, so every rule is exactly
// invariant to row order and trimmed_mean(U, 0) == fed_avg(U) bit for bit.
std::vector<double> fed_avg(const UpdateMatrix& u);
std::vector<double> trimmed_mean(const UpdateMatrix& u, std::size_t m);
std::vector<double> coordinate_median(const UpdateMatrix& u);
UpdateStats update_stats(const UpdateMatrix& u);

std::vector<double> aggregate(const AggregationRule& rule, const UpdateMatrix& u);

// Throws ValidationError unless `rule` can aggregate n rows.
void check_rule(const AggregationRule& rule, std::size_t n);

}  // namespace sfl
