#include "spkclust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "spkclust/geometry.hpp"

namespace spkclust {

std::vector<std::string> speaker_labels(const Corpus& corpus) {
  std::vector<std::string> labels;
  labels.reserve(corpus.size());
  for (const auto& u : corpus.utterances()) {
    if (!u.true_speaker) throw DataError(fmt::format("utterance '{}' has no speaker label", u.id));
    labels.push_back(*u.true_speaker);
  }
  return labels;
}

Purity cluster_purity(std::span<const std::size_t> members, std::span<const std::string> labels) {
  if (members.empty()) throw std::invalid_argument("purity of an empty cluster");
  std::map<std::string_view, std::size_t> counts;
  for (auto m : members) {
    if (m >= labels.size()) throw DataError(fmt::format("no label for utterance index {}", m));
    ++counts[labels[m]];
  }
  // std::map iterates labels in order, so strict > keeps the smallest on ties.
  Purity p;
  for (const auto& [label, count] : counts) {
    if (count > p.dominant_count) {
      p.dominant_count = count;
      p.dominant_speaker = std::string(label);
    }
  }
  p.purity = static_cast<double>(p.dominant_count) / static_cast<double>(members.size());
  return p;
}

Uniqueness cluster_uniqueness(std::span<const Cluster> clusters,
                              std::span<const std::string> labels) {
  if (clusters.empty()) throw DataError("cluster uniqueness is undefined without clusters");
  std::unordered_map<std::string, std::size_t> dominated;
  for (const auto& c : clusters) ++dominated[cluster_purity(c.members, labels).dominant_speaker];
  Uniqueness u;
  for (const auto& [speaker, count] : dominated) {
    if (count == 1) ++u.speakers_with_one_cluster;
  }
  u.uniqueness =
      static_cast<double>(u.speakers_with_one_cluster) / static_cast<double>(clusters.size());
  return u;
}

ClusteringResult filter_small_clusters(const ClusteringResult& result,
                                       std::size_t min_utterances) {
  ClusteringResult out;
  out.noise = result.noise;
  out.stage_log = result.stage_log;
  for (const auto& c : result.clusters) {
    if (c.size() < min_utterances) {
      out.noise.insert(out.noise.end(), c.members.begin(), c.members.end());
    } else {
      out.clusters.push_back(c);
    }
  }
  std::sort(out.noise.begin(), out.noise.end());
  out.stage_log.push_back({"filter_small_clusters", result.clusters.size(),
                           out.clusters.size(), out.noise.size()});
  return out;
}

double noise_fraction(const ClusteringResult& result, std::size_t corpus_size) {
  if (corpus_size == 0) return 0.0;
  return static_cast<double>(result.noise.size()) / static_cast<double>(corpus_size);
}

double data_coverage(const ClusteringResult& result, double top_fraction,
                     std::size_t min_utterances) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw std::invalid_argument("top_fraction must be in (0, 1]");
  }
  const auto filtered = filter_small_clusters(result, min_utterances);
  if (filtered.clusters.empty()) throw DataError("no clusters left after filtering");
  std::vector<std::size_t> sizes;
  for (const auto& c : filtered.clusters) sizes.push_back(c.size());
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  const auto take = std::min(
      sizes.size(),
      static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(sizes.size()) - 1e-12)));
  std::size_t top = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    total += sizes[i];
    if (i < take) top += sizes[i];
  }
  return static_cast<double>(top) / static_cast<double>(total);
}

EvaluationReport evaluate(const ClusteringResult& result, const Corpus& corpus,
                          std::size_t min_utterances, double top_fraction) {
  const auto labels = speaker_labels(corpus);
  const auto filtered = filter_small_clusters(result, min_utterances);
  EvaluationReport r;
  r.num_clusters_total = result.clusters.size();
  r.num_clusters_after_filter = filtered.clusters.size();
  r.noise_fraction = noise_fraction(result, corpus.size());
  if (filtered.clusters.empty()) throw DataError("no clusters left after filtering");

  std::size_t dominant_total = 0;
  std::size_t member_total = 0;
  double purity_sum = 0.0;
  for (const auto& c : filtered.clusters) {
    const auto p = cluster_purity(c.members, labels);
    r.per_cluster_purity[c.id] = p.purity;
    purity_sum += p.purity;
    dominant_total += p.dominant_count;
    member_total += c.size();
  }
  r.average_purity = purity_sum / static_cast<double>(filtered.clusters.size());
  r.weighted_purity = static_cast<double>(dominant_total) / static_cast<double>(member_total);
  const auto u = cluster_uniqueness(filtered.clusters, labels);
  r.speakers_with_one_dominant_cluster = u.speakers_with_one_cluster;
  r.cluster_uniqueness = u.uniqueness;
  r.coverage = data_coverage(result, top_fraction, min_utterances);
  return r;
}

namespace {

struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  SummaryStats stats() const {
    return {n, mean, n > 0 ? std::sqrt(m2 / static_cast<double>(n)) : 0.0};
  }
};

}  // namespace

SimilarityReport similarity_report(const Corpus& corpus, const SimilarityReportOptions& options) {
  if (options.bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  const auto labels = speaker_labels(corpus);
  if (corpus.size() < 2) throw DataError("similarity report needs at least 2 utterances");
  if (std::unordered_set<std::string>(labels.begin(), labels.end()).size() < 2) {
    throw DataError("similarity report needs at least 2 speakers");
  }

  SimilarityReport r;
  const std::size_t bins = options.bins;
  r.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    r.bin_edges[b] = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
  }
  r.same_counts.assign(bins, 0);
  r.different_counts.assign(bins, 0);
  Welford same;
  Welford diff;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t j = i + 1; j < corpus.size(); ++j) {
      const double s = cosine_similarity(corpus.embedding(i), corpus.embedding(j));
      const auto bin = std::min(
          bins - 1, static_cast<std::size_t>((s + 1.0) / 2.0 * static_cast<double>(bins)));
      if (labels[i] == labels[j]) {
        same.add(s);
        ++r.same_counts[bin];
        if (options.keep_samples) r.same_samples.push_back(s);
      } else {
        diff.add(s);
        ++r.different_counts[bin];
        if (options.keep_samples) r.different_samples.push_back(s);
      }
    }
  }
  r.same = same.stats();
  r.different = diff.stats();
  if (r.same.count > 0) {
    for (std::size_t b = 0; b < bins; ++b) {
      r.overlap += std::min(
          static_cast<double>(r.same_counts[b]) / static_cast<double>(r.same.count),
          static_cast<double>(r.different_counts[b]) / static_cast<double>(r.different.count));
    }
  }
  return r;
}

}  // namespace spkclust
