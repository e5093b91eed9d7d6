#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "spkclust/core.hpp"

namespace spkclust {

#ifdef SPKCLUST_FLOAT_DISTANCES
using distance_t = float;
#else
using distance_t = double;
#endif

/// Condensed index of pair (i, j), i < j < n, in row-major upper-triangular order.
constexpr std::size_t condensed_index(std::size_t n, std::size_t i, std::size_t j) {
  return n * i - i * (i + 1) / 2 + (j - i - 1);
}

/// Inverse of condensed_index.
std::pair<std::size_t, std::size_t> condensed_pair(std::size_t n, std::size_t k);

/// Symmetric all-pairs distances with an implicit zero diagonal, stored as
/// the n(n-1)/2 upper-triangular entries.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n);
  DistanceMatrix(std::size_t n, std::vector<distance_t> condensed);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    return data_[condensed_index(n_, i, j)];
  }
  void set(std::size_t i, std::size_t j, double value) {
    if (i > j) std::swap(i, j);
    data_[condensed_index(n_, i, j)] = static_cast<distance_t>(value);
  }
  std::span<const distance_t> condensed() const { return data_; }
  std::span<distance_t> condensed() { return data_; }

  static std::size_t bytes_for(std::size_t n) {
    return n < 2 ? 0 : n * (n - 1) / 2 * sizeof(distance_t);
  }

 private:
  std::size_t n_ = 0;
  std::vector<distance_t> data_;
};

/// The caller asked for a matrix larger than the configured memory budget.
class MemoryBudgetError : public DataError {
 public:
  MemoryBudgetError(std::size_t required, std::size_t available);
  std::size_t required() const { return required_; }
  std::size_t available() const { return available_; }

 private:
  std::size_t required_;
  std::size_t available_;
};

struct DistanceOptions {
  std::size_t threads = 0;
  std::size_t max_bytes = std::size_t{4} << 30;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Cosine similarity clamped to [-1, 1]. Throws std::invalid_argument on a
/// dimension mismatch or a zero-norm input.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

DistanceMatrix pairwise_distance_matrix(std::span<const Embedding> points,
                                        const DistanceOptions& options = {});
DistanceMatrix pairwise_distance_matrix(const Corpus& corpus,
                                        std::span<const std::size_t> indices,
                                        const DistanceOptions& options = {});

/// L2-renormalized mean. Throws std::invalid_argument for an empty input or
/// a (numerically) zero mean.
Embedding centroid(std::span<const Embedding> members);
Embedding centroid_of(const Corpus& corpus, std::span<const std::size_t> members);

double cluster_similarity(const Cluster& a, const Cluster& b);

}  // namespace spkclust
