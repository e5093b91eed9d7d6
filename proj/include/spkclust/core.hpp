#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spkclust {

/// Fixed-dimension utterance embedding. Unit norm is expected but enforced
/// at the io boundary, not by the type.
using Embedding = std::vector<double>;

using ClusterId = std::int64_t;
inline constexpr ClusterId kNoiseLabel = -1;

/// Thrown for malformed or inconsistent input data (exit code 2 at the CLI).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Utterance {
  std::string id;
  Embedding embedding;
  std::optional<double> duration_seconds;
  std::optional<std::string> true_speaker;
};

/// Ordered utterance list sharing one embedding dimension. Order matters:
/// partial sets are cut in insertion order.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Utterance> utterances, std::size_t dimension);

  const std::vector<Utterance>& utterances() const { return utterances_; }
  const Utterance& operator[](std::size_t i) const { return utterances_[i]; }
  std::span<const double> embedding(std::size_t i) const {
    return utterances_[i].embedding;
  }
  std::size_t size() const { return utterances_.size(); }
  bool empty() const { return utterances_.empty(); }
  std::size_t dimension() const { return dimension_; }

  bool has_all_labels() const;
  bool has_all_durations() const;

 private:
  std::vector<Utterance> utterances_;
  std::size_t dimension_ = 0;
};

/// Where a cluster came from; informational only.
struct ClusterOrigin {
  std::size_t partition = 0;
  std::size_t merge_generation = 0;
  bool from_split = false;
};

struct Cluster {
  ClusterId id = 0;
  std::vector<std::size_t> members;  // sorted ascending corpus indices
  Embedding centroid;
  ClusterOrigin origin;

  std::size_t size() const { return members.size(); }
};

/// Builds a cluster with sorted members and a freshly computed centroid.
Cluster make_cluster(const Corpus& corpus, ClusterId id,
                     std::vector<std::size_t> members,
                     ClusterOrigin origin = {});

/// Recomputes `cluster.centroid` from its members (ascending index order).
void refresh_centroid(const Corpus& corpus, Cluster& cluster);

struct StageRecord {
  std::string stage;
  std::size_t clusters_before = 0;
  std::size_t clusters_after = 0;
  std::size_t noise_count = 0;
};

struct ClusteringResult {
  std::vector<Cluster> clusters;     // sorted by id
  std::vector<std::size_t> noise;    // sorted ascending
  std::vector<StageRecord> stage_log;

  /// Per-utterance cluster id, kNoiseLabel for noise.
  std::vector<ClusterId> labels(std::size_t corpus_size) const;
};

/// Throws std::logic_error unless members and noise exactly partition
/// [0, corpus_size) and cluster ids are unique.
void check_partition(const ClusteringResult& result, std::size_t corpus_size);

/// Monotonic cluster id allocator; ids are never reused.
class ClusterIdSource {
 public:
  explicit ClusterIdSource(ClusterId first = 0) : next_(first) {}
  ClusterId next() { return next_++; }
  ClusterId peek() const { return next_; }

 private:
  ClusterId next_;
};

enum class SelectionMethod { kExcessOfMass, kLeaf };

struct PipelineParams {
  std::size_t partial_set_size = 10000;
  std::size_t min_cluster_size = 4;
  std::size_t min_samples = 1;
  double fit_noise_on_similarity = 0.8;
  double merge_start = 0.96;
  double merge_end = 0.90;
  double merge_step = 0.01;
  double big_cluster_std_factor = 2.0;
  std::size_t report_min_cluster_utterances = 30;
  std::optional<double> speaker_duration_cap_seconds = 5400.0;
  // Only "precomputed" cosine distances are supported.
  std::string metric = "precomputed";

  std::size_t threads = 0;  // 0 = hardware concurrency
  std::size_t max_distance_matrix_bytes = std::size_t{4} << 30;

  /// Throws std::invalid_argument on the first violated constraint.
  void validate() const;
};

}  // namespace spkclust
