#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "spkclust/core.hpp"
#include "spkclust/geometry.hpp"

namespace spkclust {

/// Lambda assigned to zero-distance separations (duplicate points).
inline constexpr double kMaxLambda = 1e12;

inline double lambda_from_distance(double distance) {
  return distance > 1.0 / kMaxLambda ? 1.0 / distance : kMaxLambda;
}

struct MstEdge {
  std::size_t a = 0;  // a < b
  std::size_t b = 0;
  double weight = 0.0;
};

/// One single-linkage merge. Node ids: points are [0, n), the k-th merge
/// creates node n + k.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::size_t num_points = 0;
  std::vector<Merge> merges;  // n - 1 entries, nondecreasing distance
};

/// Edge of the condensed tree. Ids below num_points are points, the rest are
/// clusters; the root cluster is num_points and children always have larger
/// ids than their parent.
struct CondensedEdge {
  std::size_t parent = 0;
  std::size_t child = 0;
  double lambda = 0.0;
  std::size_t child_size = 0;
};

class CondensedTree {
 public:
  CondensedTree(std::size_t num_points, std::size_t min_cluster_size,
                std::vector<CondensedEdge> edges, std::size_t num_clusters);

  std::size_t num_points() const { return num_points_; }
  std::size_t min_cluster_size() const { return min_cluster_size_; }
  std::size_t root() const { return num_points_; }
  std::size_t num_clusters() const { return num_clusters_; }
  bool is_cluster(std::size_t node) const { return node >= num_points_; }
  const std::vector<CondensedEdge>& edges() const { return edges_; }

  /// Child cluster ids of `cluster` (empty for a leaf).
  const std::vector<std::size_t>& child_clusters(std::size_t cluster) const {
    return children_[cluster - num_points_];
  }
  /// Parent cluster of a cluster node; the root returns itself.
  std::size_t parent_cluster(std::size_t cluster) const {
    return parent_[cluster - num_points_];
  }
  /// Lambda at which `cluster` split off its parent; 0 for the root.
  double birth_lambda(std::size_t cluster) const { return birth_[cluster - num_points_]; }
  /// Number of points in `cluster` at birth.
  std::size_t cluster_size(std::size_t cluster) const { return size_[cluster - num_points_]; }

  /// Sum over departing points of (lambda_depart - lambda_birth), indexed by
  /// cluster id - num_points.
  std::vector<double> stabilities() const;

 private:
  std::size_t num_points_;
  std::size_t min_cluster_size_;
  std::vector<CondensedEdge> edges_;
  std::size_t num_clusters_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> parent_;
  std::vector<double> birth_;
  std::vector<std::size_t> size_;
};

struct HdbscanLabels {
  std::vector<ClusterId> labels;      // kNoiseLabel or 0..num_clusters-1
  std::vector<double> probabilities;  // informational, 0 for noise
  std::size_t num_clusters = 0;
  std::vector<std::size_t> selected;  // condensed-tree node per flat label
};

struct HdbscanParams {
  std::size_t min_cluster_size = 4;
  std::size_t min_samples = 1;
  SelectionMethod method = SelectionMethod::kExcessOfMass;
  std::size_t threads = 0;
};

SelectionMethod parse_selection_method(std::string_view tag);

/// Distance from each point to its min_samples-th nearest other point.
std::vector<double> core_distances(const DistanceMatrix& dm, std::size_t min_samples,
                                   std::size_t threads = 0);

DistanceMatrix mutual_reachability(const DistanceMatrix& dm, std::span<const double> core);

/// Dense Prim's algorithm started at point 0; ties go to the lower index.
std::vector<MstEdge> minimum_spanning_tree(const DistanceMatrix& weights);
/// Same, over the mutual-reachability weights implied by `dm` and `core`
/// without materializing them.
std::vector<MstEdge> minimum_spanning_tree(const DistanceMatrix& dm,
                                           std::span<const double> core);

Dendrogram build_hierarchy(std::span<const MstEdge> mst, std::size_t num_points);

CondensedTree condense_tree(const Dendrogram& dendrogram, std::size_t min_cluster_size);

HdbscanLabels select_clusters(const CondensedTree& tree, SelectionMethod method);

HdbscanLabels run_hdbscan(const DistanceMatrix& dm, const HdbscanParams& params);

}  // namespace spkclust
