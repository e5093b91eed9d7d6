#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spkclust/core.hpp"

namespace spkclust {

/// Ground-truth speaker per corpus index. Throws DataError if any utterance
/// is unlabeled.
std::vector<std::string> speaker_labels(const Corpus& corpus);

struct Purity {
  double purity = 0.0;
  std::string dominant_speaker;
  std::size_t dominant_count = 0;
};

/// Dominant-speaker share of one cluster; ties resolve to the
/// lexicographically smallest label.
Purity cluster_purity(std::span<const std::size_t> members, std::span<const std::string> labels);

struct Uniqueness {
  std::size_t speakers_with_one_cluster = 0;
  double uniqueness = 0.0;
};

/// Speakers that dominate exactly one cluster, over the number of clusters.
Uniqueness cluster_uniqueness(std::span<const Cluster> clusters,
                              std::span<const std::string> labels);

/// Moves clusters with fewer than `min_utterances` members into noise.
ClusteringResult filter_small_clusters(const ClusteringResult& result,
                                       std::size_t min_utterances);

double noise_fraction(const ClusteringResult& result, std::size_t corpus_size);

/// Share of clustered utterances held by the largest ceil(top_fraction * k)
/// clusters that survive filter_small_clusters(min_utterances).
double data_coverage(const ClusteringResult& result, double top_fraction,
                     std::size_t min_utterances);

struct EvaluationReport {
  std::size_t num_clusters_total = 0;
  std::size_t num_clusters_after_filter = 0;
  std::map<ClusterId, double> per_cluster_purity;
  double average_purity = 0.0;
  double weighted_purity = 0.0;  // utterance-weighted variant
  std::size_t speakers_with_one_dominant_cluster = 0;
  double cluster_uniqueness = 0.0;
  double noise_fraction = 0.0;
  double coverage = 0.0;
};

/// Filters small clusters, then scores purity, uniqueness and coverage on
/// the survivors. Noise fraction is taken from the unfiltered result.
EvaluationReport evaluate(const ClusteringResult& result, const Corpus& corpus,
                          std::size_t min_utterances = 30, double top_fraction = 0.8);

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct SimilarityReport {
  std::vector<double> bin_edges;  // bins + 1 edges over [-1, 1]
  std::vector<std::size_t> same_counts;
  std::vector<std::size_t> different_counts;
  SummaryStats same;
  SummaryStats different;
  /// Histogram overlap coefficient: sum over bins of min(p_same, p_diff).
  double overlap = 0.0;
  // Raw similarities, filled only when requested.
  std::vector<double> same_samples;
  std::vector<double> different_samples;
};

struct SimilarityReportOptions {
  std::size_t bins = 100;
  bool keep_samples = false;
};

/// Same-speaker vs different-speaker pairwise cosine similarities.
SimilarityReport similarity_report(const Corpus& corpus,
                                   const SimilarityReportOptions& options = {});

}  // namespace spkclust
