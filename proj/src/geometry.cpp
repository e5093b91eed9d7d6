#include "spkclust/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "parallel.hpp"

namespace spkclust {

std::pair<std::size_t, std::size_t> condensed_pair(std::size_t n, std::size_t k) {
  // Row i starts at n*i - i*(i+1)/2; estimate i from the quadratic, then fix up.
  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(k);
  auto i = static_cast<std::size_t>(
      std::floor((2.0 * nn - 1.0 - std::sqrt((2.0 * nn - 1.0) * (2.0 * nn - 1.0) - 8.0 * kk)) / 2.0));
  auto row_start = [n](std::size_t r) { return n * r - r * (r + 1) / 2; };
  while (i > 0 && row_start(i) > k) --i;
  while (i + 1 < n && row_start(i + 1) <= k) ++i;
  return {i, k - row_start(i) + i + 1};
}

DistanceMatrix::DistanceMatrix(std::size_t n)
    : n_(n), data_(n < 2 ? 0 : n * (n - 1) / 2, distance_t{0}) {}

DistanceMatrix::DistanceMatrix(std::size_t n, std::vector<distance_t> condensed)
    : n_(n), data_(std::move(condensed)) {
  const std::size_t expected = n < 2 ? 0 : n * (n - 1) / 2;
  if (data_.size() != expected) {
    throw std::invalid_argument(fmt::format(
        "condensed matrix for n={} needs {} entries, got {}", n, expected, data_.size()));
  }
}

MemoryBudgetError::MemoryBudgetError(std::size_t required, std::size_t available)
    : DataError(fmt::format("distance matrix needs {} bytes but the budget is {} bytes; "
                            "use a smaller partial set size",
                            required, available)),
      required_(required),
      available_(available) {}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(
        fmt::format("dimension mismatch: {} vs {}", a.size(), b.size()));
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw std::invalid_argument("cosine similarity of a zero-norm vector");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

namespace {

DistanceMatrix distances_from_rows(const std::vector<const double*>& rows,
                                   std::size_t dim, const DistanceOptions& options) {
  const std::size_t n = rows.size();
  if (n < 2) throw std::invalid_argument("pairwise distances need at least 2 points");
  const std::size_t required = DistanceMatrix::bytes_for(n);
  if (required > options.max_bytes) throw MemoryBudgetError(required, options.max_bytes);

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = l2_norm({rows[i], dim});
    if (!(norms[i] > 0.0)) {
      throw std::invalid_argument(fmt::format("point {} has zero norm", i));
    }
  }

  DistanceMatrix dm(n);
  auto out = dm.condensed();
  detail::parallel_rows(n - 1, options.threads, [&](std::size_t i) {
    const std::span<const double> a{rows[i], dim};
    std::size_t k = condensed_index(n, i, i + 1);
    for (std::size_t j = i + 1; j < n; ++j, ++k) {
      const double sim = std::clamp(dot(a, {rows[j], dim}) / (norms[i] * norms[j]), -1.0, 1.0);
      out[k] = static_cast<distance_t>(1.0 - sim);
    }
  });
  return dm;
}

}  // namespace

DistanceMatrix pairwise_distance_matrix(std::span<const Embedding> points,
                                        const DistanceOptions& options) {
  std::vector<const double*> rows;
  rows.reserve(points.size());
  const std::size_t dim = points.empty() ? 0 : points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw std::invalid_argument("points have mixed dimensions");
    rows.push_back(p.data());
  }
  return distances_from_rows(rows, dim, options);
}

DistanceMatrix pairwise_distance_matrix(const Corpus& corpus,
                                        std::span<const std::size_t> indices,
                                        const DistanceOptions& options) {
  std::vector<const double*> rows;
  rows.reserve(indices.size());
  for (auto idx : indices) rows.push_back(corpus[idx].embedding.data());
  return distances_from_rows(rows, corpus.dimension(), options);
}

namespace {

Embedding normalized_mean(std::vector<double> sum, std::size_t count) {
  for (auto& x : sum) x /= static_cast<double>(count);
  const double norm = l2_norm(sum);
  if (!(norm > 1e-12)) throw std::invalid_argument("centroid of members is the zero vector");
  for (auto& x : sum) x /= norm;
  return sum;
}

}  // namespace

Embedding centroid(std::span<const Embedding> members) {
  if (members.empty()) throw std::invalid_argument("centroid of an empty member list");
  std::vector<double> sum(members.front().size(), 0.0);
  for (const auto& m : members) {
    if (m.size() != sum.size()) throw std::invalid_argument("members have mixed dimensions");
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += m[k];
  }
  return normalized_mean(std::move(sum), members.size());
}

Embedding centroid_of(const Corpus& corpus, std::span<const std::size_t> members) {
  if (members.empty()) throw std::invalid_argument("centroid of an empty member list");
  std::vector<double> sum(corpus.dimension(), 0.0);
  // Callers keep members sorted, so summation order is ascending index.
  for (auto idx : members) {
    const auto e = corpus.embedding(idx);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += e[k];
  }
  return normalized_mean(std::move(sum), members.size());
}

double cluster_similarity(const Cluster& a, const Cluster& b) {
  return cosine_similarity(a.centroid, b.centroid);
}

}  // namespace spkclust
