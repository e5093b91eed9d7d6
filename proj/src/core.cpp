#include "spkclust/core.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "spkclust/geometry.hpp"

namespace spkclust {

Corpus::Corpus(std::vector<Utterance> utterances, std::size_t dimension)
    : utterances_(std::move(utterances)), dimension_(dimension) {
  if (utterances_.empty()) throw DataError("corpus is empty");
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < utterances_.size(); ++i) {
    const auto& u = utterances_[i];
    if (u.embedding.size() != dimension_) {
      throw DataError(fmt::format("utterance {} ('{}') has dimension {}, expected {}",
                                  i, u.id, u.embedding.size(), dimension_));
    }
    if (!seen.insert(u.id).second) {
      throw DataError(fmt::format("duplicate utterance id '{}'", u.id));
    }
    if (u.duration_seconds && !(*u.duration_seconds > 0.0)) {
      throw DataError(fmt::format("utterance '{}' has non-positive duration", u.id));
    }
  }
}

bool Corpus::has_all_labels() const {
  return std::all_of(utterances_.begin(), utterances_.end(),
                     [](const Utterance& u) { return u.true_speaker.has_value(); });
}

bool Corpus::has_all_durations() const {
  return std::all_of(utterances_.begin(), utterances_.end(),
                     [](const Utterance& u) { return u.duration_seconds.has_value(); });
}

Cluster make_cluster(const Corpus& corpus, ClusterId id,
                     std::vector<std::size_t> members, ClusterOrigin origin) {
  Cluster c;
  c.id = id;
  c.members = std::move(members);
  std::sort(c.members.begin(), c.members.end());
  c.origin = origin;
  refresh_centroid(corpus, c);
  return c;
}

void refresh_centroid(const Corpus& corpus, Cluster& cluster) {
  cluster.centroid = centroid_of(corpus, cluster.members);
}

std::vector<ClusterId> ClusteringResult::labels(std::size_t corpus_size) const {
  std::vector<ClusterId> out(corpus_size, kNoiseLabel);
  for (const auto& c : clusters) {
    for (auto m : c.members) out.at(m) = c.id;
  }
  return out;
}

void check_partition(const ClusteringResult& result, std::size_t corpus_size) {
  std::vector<char> seen(corpus_size, 0);
  auto mark = [&](std::size_t idx, const char* what) {
    if (idx >= corpus_size) {
      throw std::logic_error(fmt::format("{} index {} out of range", what, idx));
    }
    if (seen[idx]) {
      throw std::logic_error(fmt::format("index {} assigned twice", idx));
    }
    seen[idx] = 1;
  };
  std::unordered_set<ClusterId> ids;
  for (const auto& c : result.clusters) {
    if (!ids.insert(c.id).second) {
      throw std::logic_error(fmt::format("duplicate cluster id {}", c.id));
    }
    if (c.members.empty()) {
      throw std::logic_error(fmt::format("cluster {} is empty", c.id));
    }
    for (auto m : c.members) mark(m, "member");
  }
  for (auto m : result.noise) mark(m, "noise");
  auto missing = std::find(seen.begin(), seen.end(), 0);
  if (missing != seen.end()) {
    throw std::logic_error(fmt::format("index {} is neither clustered nor noise",
                                       missing - seen.begin()));
  }
}

void PipelineParams::validate() const {
  if (partial_set_size == 0) throw std::invalid_argument("partial_set_size must be positive");
  if (min_cluster_size < 2) throw std::invalid_argument("min_cluster_size must be >= 2");
  if (min_samples < 1 || min_samples > min_cluster_size) {
    throw std::invalid_argument("min_samples must be in [1, min_cluster_size]");
  }
  if (partial_set_size < min_cluster_size) {
    throw std::invalid_argument("partial_set_size must be >= min_cluster_size");
  }
  if (metric != "precomputed") throw std::invalid_argument("metric must be 'precomputed'");
  if (!(fit_noise_on_similarity >= -1.0 && fit_noise_on_similarity <= 1.0)) {
    throw std::invalid_argument("fit_noise_on_similarity must be in [-1, 1]");
  }
  if (!(merge_step > 0.0)) throw std::invalid_argument("merge_step must be positive");
  if (!(merge_end <= merge_start)) throw std::invalid_argument("merge_end must be <= merge_start");
  if (!(merge_start <= 1.0 && merge_end > -1.0)) {
    throw std::invalid_argument("merge thresholds must lie in (-1, 1]");
  }
  if (!(big_cluster_std_factor > 0.0)) {
    throw std::invalid_argument("big_cluster_std_factor must be positive");
  }
  if (speaker_duration_cap_seconds && !(*speaker_duration_cap_seconds > 0.0)) {
    throw std::invalid_argument("speaker_duration_cap_seconds must be positive");
  }
}

}  // namespace spkclust
