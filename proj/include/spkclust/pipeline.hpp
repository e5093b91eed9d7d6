#pragma once

#include <cstddef>
#include <functional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "spkclust/core.hpp"

namespace spkclust {

/// Strictly descending similarity thresholds for centroid merging.
class MergeSchedule {
 public:
  explicit MergeSchedule(std::vector<double> thresholds);

  /// start, start - step, ... down to end (inclusive, within 1e-9).
  static MergeSchedule linear(double start, double end, double step);
  static MergeSchedule from_params(const PipelineParams& params);

  const std::vector<double>& thresholds() const { return thresholds_; }
  double last() const { return thresholds_.back(); }

 private:
  std::vector<double> thresholds_;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

std::vector<IndexRange> partition_corpus(std::size_t corpus_size, std::size_t partial_set_size,
                                         std::size_t min_cluster_size);

/// HDBSCAN (EOM) over one contiguous range. Cluster ids come from `ids`.
ClusteringResult cluster_partition(const Corpus& corpus, IndexRange range,
                                   const PipelineParams& params, std::size_t partition_index,
                                   ClusterIdSource& ids);

/// Greedy highest-similarity-first centroid merging, one threshold level at a
/// time. The surviving cluster keeps the smaller id.
std::vector<Cluster> merge_clusters(const Corpus& corpus, std::vector<Cluster> clusters,
                                    const MergeSchedule& schedule);

std::set<ClusterId> find_big_clusters(std::span<const Cluster> clusters, double std_factor);

struct SplitResult {
  std::vector<Cluster> clusters;
  std::vector<std::size_t> noise;  // corpus indices dropped by the sub-run
  bool split = false;
};

/// Re-clusters one cluster with leaf selection. Returns the input cluster
/// unchanged unless the sub-run finds at least two clusters.
SplitResult split_big_cluster(const Corpus& corpus, const Cluster& cluster,
                              const PipelineParams& params, ClusterIdSource& ids);

struct NoiseAssignment {
  std::vector<Cluster> clusters;
  std::vector<std::size_t> remaining_noise;
};

/// Attaches each noise point to its most similar centroid when the similarity
/// is strictly greater than `fit_noise_on_similarity`. All decisions use the
/// input centroids; centroids are refreshed once at the end.
NoiseAssignment assign_noise(const Corpus& corpus, std::vector<Cluster> clusters,
                             std::span<const std::size_t> noise,
                             double fit_noise_on_similarity);

using StageObserver = std::function<void(std::string_view stage, const ClusteringResult&)>;

ClusteringResult run_pipeline(const Corpus& corpus, const PipelineParams& params,
                              const StageObserver& observer = {});

struct DurationSelection {
  ClusterId cluster = 0;
  std::vector<std::size_t> selected;  // input order
  std::vector<std::size_t> excess;
  double selected_seconds = 0.0;
};

/// Keeps each cluster's utterances in input order while the running total
/// stays within `cap_seconds`; the rest are flagged as excess.
std::vector<DurationSelection> cap_speaker_duration(const ClusteringResult& result,
                                                    const Corpus& corpus, double cap_seconds);

}  // namespace spkclust
