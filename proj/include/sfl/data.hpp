#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfl/error.hpp"
#include "sfl/tensor.hpp"

namespace sfl {

struct Dataset {
  TensorF features;  // (N, sample shape...)
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

struct TrainTest {
  Dataset train;
  Dataset test;
};

struct BlobsConfig {
  std::size_t num_classes = 4;
  std::size_t dims = 8;
  std::size_t samples_per_class = 500;
  double spread = 1.0;

  bool operator==(const BlobsConfig&) const = default;
};

// Gaussian blobs around centers of radius 3; 80/20 per-class train/test split.
TrainTest gen_blobs(std::uint64_t seed, const BlobsConfig& cfg);

class IdxError : public Error {
 public:
  enum class Kind { Io, BadMagic, CountMismatch, Truncated };
  IdxError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Images become (N, 1, rows, cols) in [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Same samples, new per-sample shape with the same element count.
Dataset reshape_samples(Dataset ds, const Shape& sample_shape);

// Gathers the given rows into a batch.
TensorF gather_rows(const TensorF& features, std::span<const std::size_t> rows);
std::vector<int> gather_labels(const std::vector<int>& labels, std::span<const std::size_t> rows);

struct Partition {
  std::vector<std::vector<std::size_t>> assignments;  // client id -> sample indices

  std::size_t n_clients() const { return assignments.size(); }
};

Partition partition_iid(std::size_t n_samples, std::size_t n_clients, std::uint64_t seed);

// Per-class Dirichlet(alpha) label skew. Empty clients are topped up with one
// sample taken from the largest client.
Partition partition_dirichlet(const std::vector<int>& labels, std::size_t num_classes, std::size_t n_clients,
                              double alpha, std::uint64_t seed);

// k distinct ids in ascending order, deterministic in (seed, round).
std::vector<std::size_t> sample_clients(std::size_t n_clients, std::size_t k, std::size_t round,
                                        std::uint64_t seed);

}  // namespace sfl
