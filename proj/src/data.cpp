#include "sfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "sfl/rng.hpp"

namespace sfl {

namespace {

constexpr double kBlobRadius = 3.0;

std::vector<std::vector<double>> blob_centers(Engine& eng, std::size_t classes, std::size_t dims) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> v(dims);
    double norm = 0.0;
    // Orthogonalise against earlier centers while there is room, so classes
    // stay equidistant; redraw on (improbable) degeneracy.
    do {
      for (double& x : v) x = normal(eng);
      if (c < dims) {
        for (const auto& u : centers) {
          double dot = 0.0;
          for (std::size_t k = 0; k < dims; ++k) dot += v[k] * u[k];
          for (std::size_t k = 0; k < dims; ++k) v[k] -= dot * u[k] / (kBlobRadius * kBlobRadius);
        }
      }
      norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
    } while (norm < 1e-9);
    for (double& x : v) x *= kBlobRadius / norm;
    centers.push_back(std::move(v));
  }
  return centers;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t at) {
  return (std::uint32_t(bytes[at]) << 24) | (std::uint32_t(bytes[at + 1]) << 16) |
         (std::uint32_t(bytes[at + 2]) << 8) | std::uint32_t(bytes[at + 3]);
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TrainTest gen_blobs(std::uint64_t seed, const BlobsConfig& cfg) {
  if (cfg.num_classes < 2) throw ValidationError("blobs: num_classes must be >= 2");
  if (cfg.dims < 2) throw ValidationError("blobs: dims must be >= 2");
  if (cfg.samples_per_class < 2) throw ValidationError("blobs: samples_per_class must be >= 2");
  if (!(cfg.spread > 0.0)) throw ValidationError("blobs: spread must be > 0");

  Engine eng = make_engine(seed, {stream::kBlobs});
  const auto centers = blob_centers(eng, cfg.num_classes, cfg.dims);
  const std::size_t n_train = cfg.samples_per_class * 4 / 5;
  const std::size_t n_test = cfg.samples_per_class - n_train;

  TrainTest tt;
  tt.train.num_classes = tt.test.num_classes = cfg.num_classes;
  tt.train.features = TensorF({n_train * cfg.num_classes, cfg.dims});
  tt.test.features = TensorF({n_test * cfg.num_classes, cfg.dims});
  std::normal_distribution<double> noise(0.0, cfg.spread);
  // Rows are interleaved by class: row i*K + c holds sample i of class c.
  for (std::size_t i = 0; i < cfg.samples_per_class; ++i) {
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      Dataset& ds = i < n_train ? tt.train : tt.test;
      const std::size_t row = (i < n_train ? i : i - n_train) * cfg.num_classes + c;
      for (std::size_t k = 0; k < cfg.dims; ++k)
        ds.features.values[row * cfg.dims + k] = centers[c][k] + noise(eng);
    }
  }
  for (std::size_t i = 0; i < n_train; ++i)
    for (std::size_t c = 0; c < cfg.num_classes; ++c) tt.train.labels.push_back(int(c));
  for (std::size_t i = 0; i < n_test; ++i)
    for (std::size_t c = 0; c < cfg.num_classes; ++c) tt.test.labels.push_back(int(c));
  return tt;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const auto lbl = read_file(labels_path);
  if (img.size() < 16) throw IdxError(IdxError::Kind::Truncated, images_path + ": header truncated");
  if (lbl.size() < 8) throw IdxError(IdxError::Kind::Truncated, labels_path + ": header truncated");
  if (read_be32(img, 0) != 0x00000803)
    throw IdxError(IdxError::Kind::BadMagic, images_path + ": bad magic, expected 0x00000803");
  if (read_be32(lbl, 0) != 0x00000801)
    throw IdxError(IdxError::Kind::BadMagic, labels_path + ": bad magic, expected 0x00000801");

  const std::size_t n = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
  const std::size_t n_labels = read_be32(lbl, 4);
  if (n != n_labels)
    throw IdxError(IdxError::Kind::CountMismatch, images_path + " has " + std::to_string(n) + " images but " +
                                                      labels_path + " has " + std::to_string(n_labels) + " labels");
  if (n == 0) throw IdxError(IdxError::Kind::CountMismatch, images_path + ": no samples");
  if (img.size() < 16 + n * rows * cols) throw IdxError(IdxError::Kind::Truncated, images_path + ": pixel data truncated");
  if (lbl.size() < 8 + n) throw IdxError(IdxError::Kind::Truncated, labels_path + ": label data truncated");

  Dataset ds;
  ds.features = TensorF({n, 1, rows, cols});
  for (std::size_t i = 0; i < n * rows * cols; ++i) ds.features.values[i] = double(img[16 + i]) / 255.0;
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(int(lbl[8 + i]));
    max_label = std::max(max_label, ds.labels.back());
  }
  ds.num_classes = std::max<std::size_t>(2, std::size_t(max_label) + 1);
  return ds;
}

Dataset reshape_samples(Dataset ds, const Shape& sample_shape) {
  if (shape_size(sample_shape) != shape_size(ds.features.sample_shape()))
    throw ValidationError("dataset samples of shape " + shape_str(ds.features.sample_shape()) +
                          " cannot be viewed as " + shape_str(sample_shape));
  Shape s{ds.features.batch()};
  s.insert(s.end(), sample_shape.begin(), sample_shape.end());
  ds.features.shape = std::move(s);
  return ds;
}

TensorF gather_rows(const TensorF& features, std::span<const std::size_t> rows) {
  const std::size_t width = shape_size(features.sample_shape());
  Shape s{rows.size()};
  const Shape sample = features.sample_shape();
  s.insert(s.end(), sample.begin(), sample.end());
  TensorF out(s);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= features.batch()) throw ValidationError("gather_rows: index out of range");
    std::copy_n(features.values.begin() + std::ptrdiff_t(rows[r] * width), width,
                out.values.begin() + std::ptrdiff_t(r * width));
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels.at(r));
  return out;
}

Partition partition_iid(std::size_t n_samples, std::size_t n_clients, std::uint64_t seed) {
  if (n_clients == 0) throw ValidationError("partition_iid: n_clients must be >= 1");
  if (n_clients > n_samples)
    throw ValidationError("partition_iid: " + std::to_string(n_clients) + " clients for " +
                          std::to_string(n_samples) + " samples");
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  Engine eng = make_engine(seed, {stream::kPartition});
  std::shuffle(order.begin(), order.end(), eng);

  Partition p;
  p.assignments.resize(n_clients);
  const std::size_t base = n_samples / n_clients, extra = n_samples % n_clients;
  std::size_t at = 0;
  for (std::size_t c = 0; c < n_clients; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    p.assignments[c].assign(order.begin() + std::ptrdiff_t(at), order.begin() + std::ptrdiff_t(at + len));
    at += len;
  }
  return p;
}

Partition partition_dirichlet(const std::vector<int>& labels, std::size_t num_classes, std::size_t n_clients,
                              double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw ValidationError("partition_dirichlet: alpha must be > 0");
  if (n_clients == 0) throw ValidationError("partition_dirichlet: n_clients must be >= 1");
  if (n_clients > labels.size())
    throw ValidationError("partition_dirichlet: " + std::to_string(n_clients) + " clients for " +
                          std::to_string(labels.size()) + " samples");
  Engine eng = make_engine(seed, {stream::kPartition});
  std::gamma_distribution<double> gamma(alpha, 1.0);

  Partition p;
  p.assignments.resize(n_clients);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == int(c)) members.push_back(i);
    std::shuffle(members.begin(), members.end(), eng);

    std::vector<double> share(n_clients);
    double total = 0.0;
    for (double& s : share) total += (s = gamma(eng));
    if (!(total > 0.0)) {
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, n_clients - 1)(eng)] = total = 1.0;
    }
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < n_clients; ++k) {
      cum += share[k];
      const std::size_t end =
          k + 1 == n_clients ? members.size()
                             : std::min(members.size(), std::size_t(std::floor(cum / total * double(members.size()))));
      for (std::size_t j = start; j < std::max(start, end); ++j) p.assignments[k].push_back(members[j]);
      start = std::max(start, end);
    }
  }
  for (std::size_t e = 0; e < n_clients; ++e) {
    if (!p.assignments[e].empty()) continue;
    auto largest = std::max_element(p.assignments.begin(), p.assignments.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    p.assignments[e].push_back(largest->back());
    largest->pop_back();
  }
  for (auto& a : p.assignments) std::sort(a.begin(), a.end());
  return p;
}

std::vector<std::size_t> sample_clients(std::size_t n_clients, std::size_t k, std::size_t round,
                                        std::uint64_t seed) {
  if (k > n_clients)
    throw ValidationError("sample_clients: k=" + std::to_string(k) + " exceeds " + std::to_string(n_clients) +
                          " clients");
  std::vector<std::size_t> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  if (k == n_clients) return ids;
  Engine eng = make_engine(seed, {stream::kSampling, round});
  std::shuffle(ids.begin(), ids.end(), eng);
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace sfl
