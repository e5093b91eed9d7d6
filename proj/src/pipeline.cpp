#include "spkclust/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "spkclust/geometry.hpp"
#include "spkclust/hdbscan.hpp"

namespace spkclust {

MergeSchedule::MergeSchedule(std::vector<double> thresholds)
    : thresholds_(std::move(thresholds)) {
  if (thresholds_.empty()) throw std::invalid_argument("merge schedule is empty");
  for (std::size_t i = 0; i < thresholds_.size(); ++i) {
    const double t = thresholds_[i];
    if (!(t > -1.0 && t <= 1.0)) {
      throw std::invalid_argument(fmt::format("merge threshold {} outside (-1, 1]", t));
    }
    if (i > 0 && !(t < thresholds_[i - 1])) {
      throw std::invalid_argument("merge thresholds must be strictly descending");
    }
  }
}

MergeSchedule MergeSchedule::linear(double start, double end, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("merge step must be positive");
  if (!(end <= start)) throw std::invalid_argument("merge end must not exceed merge start");
  std::vector<double> ts;
  for (std::size_t k = 0;; ++k) {
    // Computed from the index, not by repeated subtraction, and rounded so
    // 0.96 - 6 * 0.01 is exactly 0.90.
    const double t = std::round((start - static_cast<double>(k) * step) * 1e9) / 1e9;
    if (t < end - 1e-9) break;
    ts.push_back(t);
  }
  return MergeSchedule(std::move(ts));
}

MergeSchedule MergeSchedule::from_params(const PipelineParams& params) {
  return linear(params.merge_start, params.merge_end, params.merge_step);
}

std::vector<IndexRange> partition_corpus(std::size_t corpus_size, std::size_t partial_set_size,
                                         std::size_t min_cluster_size) {
  if (corpus_size == 0) throw DataError("cannot partition an empty corpus");
  if (partial_set_size == 0 || partial_set_size < min_cluster_size) {
    throw std::invalid_argument("partial_set_size must be >= min_cluster_size");
  }
  std::vector<IndexRange> ranges;
  for (std::size_t begin = 0; begin < corpus_size; begin += partial_set_size) {
    ranges.push_back({begin, std::min(corpus_size, begin + partial_set_size)});
  }
  if (ranges.size() > 1 && ranges.back().size() < min_cluster_size) {
    const std::size_t end = ranges.back().end;
    ranges.pop_back();
    ranges.back().end = end;
  }
  return ranges;
}

namespace {

// A group whose members average to (numerically) zero has no direction to
// merge or assign against, so its members are treated as noise instead.
bool has_direction(const Corpus& corpus, std::span<const std::size_t> members) {
  try {
    centroid_of(corpus, members);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

}  // namespace

ClusteringResult cluster_partition(const Corpus& corpus, IndexRange range,
                                   const PipelineParams& params, std::size_t partition_index,
                                   ClusterIdSource& ids) {
  if (range.size() < 2 || range.end > corpus.size()) {
    throw std::invalid_argument(
        fmt::format("partition [{}, {}) is too small or out of range", range.begin, range.end));
  }
  std::vector<std::size_t> indices(range.size());
  std::iota(indices.begin(), indices.end(), range.begin);

  const auto dm = pairwise_distance_matrix(
      corpus, indices, {.threads = params.threads, .max_bytes = params.max_distance_matrix_bytes});
  const auto labels = run_hdbscan(dm, {.min_cluster_size = params.min_cluster_size,
                                       .min_samples = params.min_samples,
                                       .method = SelectionMethod::kExcessOfMass,
                                       .threads = params.threads});

  std::vector<std::vector<std::size_t>> groups(labels.num_clusters);
  ClusteringResult out;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (labels.labels[i] == kNoiseLabel) {
      out.noise.push_back(indices[i]);
    } else {
      groups[static_cast<std::size_t>(labels.labels[i])].push_back(indices[i]);
    }
  }
  for (auto& g : groups) {
    if (!has_direction(corpus, g)) {
      out.noise.insert(out.noise.end(), g.begin(), g.end());
      continue;
    }
    out.clusters.push_back(
        make_cluster(corpus, ids.next(), std::move(g), {.partition = partition_index}));
  }
  std::sort(out.noise.begin(), out.noise.end());
  return out;
}

namespace {

struct RowBest {
  double sim = -std::numeric_limits<double>::infinity();
  std::size_t partner = std::numeric_limits<std::size_t>::max();
};

std::vector<std::size_t> merged_members(const std::vector<std::size_t>& a,
                                        const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

std::vector<Cluster> merge_clusters(const Corpus& corpus, std::vector<Cluster> clusters,
                                    const MergeSchedule& schedule) {
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& x, const Cluster& y) { return x.id < y.id; });
  const std::size_t k = clusters.size();
  if (k < 2) return clusters;

  // sim[i * k + j] for i < j, over positions in id order.
  std::vector<double> sim(k * k, 0.0);
  std::vector<char> active(k, 1);
  std::vector<RowBest> best(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      sim[i * k + j] = cluster_similarity(clusters[i], clusters[j]);
    }
  }
  auto recompute_row = [&](std::size_t i) {
    best[i] = {};
    for (std::size_t j = i + 1; j < k; ++j) {
      if (active[j] && sim[i * k + j] > best[i].sim) best[i] = {sim[i * k + j], j};
    }
  };
  for (std::size_t i = 0; i < k; ++i) recompute_row(i);

  for (double threshold : schedule.thresholds()) {
    for (;;) {
      std::size_t row = k;
      for (std::size_t i = 0; i < k; ++i) {
        if (!active[i] || best[i].partner == std::numeric_limits<std::size_t>::max()) continue;
        if (row == k || best[i].sim > best[row].sim) row = i;
      }
      if (row == k || best[row].sim < threshold) break;

      const std::size_t keep = row;
      const std::size_t drop = best[row].partner;
      Cluster& target = clusters[keep];
      const Cluster& source = clusters[drop];
      target.members = merged_members(target.members, source.members);
      target.origin.merge_generation =
          std::max(target.origin.merge_generation, source.origin.merge_generation) + 1;
      refresh_centroid(corpus, target);
      active[drop] = 0;

      for (std::size_t j = 0; j < k; ++j) {
        if (!active[j] || j == keep) continue;
        const std::size_t lo = std::min(j, keep);
        const std::size_t hi = std::max(j, keep);
        sim[lo * k + hi] = cluster_similarity(clusters[lo], clusters[hi]);
      }
      for (std::size_t i = 0; i < k; ++i) {
        if (!active[i]) continue;
        if (i == keep || best[i].partner == keep || best[i].partner == drop) {
          recompute_row(i);
        } else if (i < keep) {
          const double s = sim[i * k + keep];
          if (s > best[i].sim || (s == best[i].sim && keep < best[i].partner)) {
            best[i] = {s, keep};
          }
        }
      }
    }
  }

  std::vector<Cluster> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (active[i]) out.push_back(std::move(clusters[i]));
  }
  return out;
}

std::set<ClusterId> find_big_clusters(std::span<const Cluster> clusters, double std_factor) {
  std::set<ClusterId> big;
  if (clusters.size() < 2) return big;
  const double k = static_cast<double>(clusters.size());
  double mean = 0.0;
  for (const auto& c : clusters) mean += static_cast<double>(c.size());
  mean /= k;
  double var = 0.0;
  for (const auto& c : clusters) {
    const double d = static_cast<double>(c.size()) - mean;
    var += d * d;
  }
  const double limit = mean + std_factor * std::sqrt(var / k);
  for (const auto& c : clusters) {
    if (static_cast<double>(c.size()) > limit) big.insert(c.id);
  }
  return big;
}

SplitResult split_big_cluster(const Corpus& corpus, const Cluster& cluster,
                              const PipelineParams& params, ClusterIdSource& ids) {
  SplitResult out;
  if (cluster.size() < 2 * params.min_cluster_size) {
    out.clusters.push_back(cluster);
    return out;
  }
  const auto dm = pairwise_distance_matrix(
      corpus, cluster.members,
      {.threads = params.threads, .max_bytes = params.max_distance_matrix_bytes});
  const auto labels = run_hdbscan(dm, {.min_cluster_size = params.min_cluster_size,
                                       .min_samples = params.min_samples,
                                       .method = SelectionMethod::kLeaf,
                                       .threads = params.threads});
  if (labels.num_clusters < 2) {
    out.clusters.push_back(cluster);
    return out;
  }
  std::vector<std::vector<std::size_t>> groups(labels.num_clusters);
  std::vector<std::size_t> noise;
  for (std::size_t i = 0; i < cluster.members.size(); ++i) {
    const auto label = labels.labels[i];
    if (label == kNoiseLabel) {
      noise.push_back(cluster.members[i]);
    } else {
      groups[static_cast<std::size_t>(label)].push_back(cluster.members[i]);
    }
  }
  std::vector<std::vector<std::size_t>> kept;
  for (auto& g : groups) {
    if (has_direction(corpus, g)) {
      kept.push_back(std::move(g));
    } else {
      noise.insert(noise.end(), g.begin(), g.end());
    }
  }
  if (kept.size() < 2) {
    out.clusters.push_back(cluster);
    return out;
  }
  ClusterOrigin origin = cluster.origin;
  origin.from_split = true;
  for (auto& g : kept) out.clusters.push_back(make_cluster(corpus, ids.next(), std::move(g), origin));
  std::sort(noise.begin(), noise.end());
  out.noise = std::move(noise);
  out.split = true;
  return out;
}

NoiseAssignment assign_noise(const Corpus& corpus, std::vector<Cluster> clusters,
                             std::span<const std::size_t> noise,
                             double fit_noise_on_similarity) {
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& x, const Cluster& y) { return x.id < y.id; });
  NoiseAssignment out;
  if (clusters.empty()) {
    out.remaining_noise.assign(noise.begin(), noise.end());
    std::sort(out.remaining_noise.begin(), out.remaining_noise.end());
    return out;
  }
  std::vector<std::vector<std::size_t>> additions(clusters.size());
  for (auto idx : noise) {
    const auto e = corpus.embedding(idx);
    std::size_t arg = 0;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      const double s = cosine_similarity(e, clusters[c].centroid);
      if (s > top) {
        top = s;
        arg = c;
      }
    }
    if (top > fit_noise_on_similarity) {
      additions[arg].push_back(idx);
    } else {
      out.remaining_noise.push_back(idx);
    }
  }
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (additions[c].empty()) continue;
    auto& members = clusters[c].members;
    members.insert(members.end(), additions[c].begin(), additions[c].end());
    std::sort(members.begin(), members.end());
    refresh_centroid(corpus, clusters[c]);
  }
  std::sort(out.remaining_noise.begin(), out.remaining_noise.end());
  out.clusters = std::move(clusters);
  return out;
}

namespace {

void sort_result(ClusteringResult& r) {
  std::sort(r.clusters.begin(), r.clusters.end(),
            [](const Cluster& x, const Cluster& y) { return x.id < y.id; });
  std::sort(r.noise.begin(), r.noise.end());
}

}  // namespace

ClusteringResult run_pipeline(const Corpus& corpus, const PipelineParams& params,
                              const StageObserver& observer) {
  params.validate();
  const auto schedule = MergeSchedule::from_params(params);
  const std::size_t n = corpus.size();
  ClusteringResult result;
  ClusterIdSource ids;

  auto finish_stage = [&](std::string name, std::size_t before) {
    sort_result(result);
    result.stage_log.push_back(
        {std::move(name), before, result.clusters.size(), result.noise.size()});
    check_partition(result, n);
    if (observer) observer(result.stage_log.back().stage, result);
  };

  const auto ranges = partition_corpus(n, params.partial_set_size, params.min_cluster_size);
  for (std::size_t p = 0; p < ranges.size(); ++p) {
    if (ranges[p].size() < 2) {
      for (auto i = ranges[p].begin; i < ranges[p].end; ++i) result.noise.push_back(i);
      continue;
    }
    auto part = cluster_partition(corpus, ranges[p], params, p, ids);
    for (auto& c : part.clusters) result.clusters.push_back(std::move(c));
    result.noise.insert(result.noise.end(), part.noise.begin(), part.noise.end());
  }
  finish_stage("partition", 0);

  std::size_t before = result.clusters.size();
  result.clusters = merge_clusters(corpus, std::move(result.clusters), schedule);
  finish_stage("merge_1", before);

  before = result.clusters.size();
  const auto big = find_big_clusters(result.clusters, params.big_cluster_std_factor);
  std::vector<Cluster> after_split;
  for (auto& c : result.clusters) {
    if (!big.contains(c.id)) {
      after_split.push_back(std::move(c));
      continue;
    }
    auto split = split_big_cluster(corpus, c, params, ids);
    for (auto& s : split.clusters) after_split.push_back(std::move(s));
    result.noise.insert(result.noise.end(), split.noise.begin(), split.noise.end());
  }
  result.clusters = std::move(after_split);
  finish_stage("split", before);

  before = result.clusters.size();
  result.clusters = merge_clusters(corpus, std::move(result.clusters), schedule);
  finish_stage("merge_2", before);

  before = result.clusters.size();
  auto fitted = assign_noise(corpus, std::move(result.clusters), result.noise,
                             params.fit_noise_on_similarity);
  result.clusters = std::move(fitted.clusters);
  result.noise = std::move(fitted.remaining_noise);
  finish_stage("assign_noise", before);
  return result;
}

std::vector<DurationSelection> cap_speaker_duration(const ClusteringResult& result,
                                                    const Corpus& corpus, double cap_seconds) {
  if (!(cap_seconds > 0.0)) throw std::invalid_argument("duration cap must be positive");
  std::vector<std::string> missing;
  for (const auto& c : result.clusters) {
    for (auto m : c.members) {
      if (!corpus[m].duration_seconds) missing.push_back(corpus[m].id);
    }
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    throw DataError(fmt::format("utterances without duration: {}", fmt::join(missing, ", ")));
  }
  std::vector<DurationSelection> out;
  out.reserve(result.clusters.size());
  for (const auto& c : result.clusters) {
    DurationSelection sel;
    sel.cluster = c.id;
    bool full = false;
    for (auto m : c.members) {
      const double d = *corpus[m].duration_seconds;
      if (!full && sel.selected_seconds + d <= cap_seconds) {
        sel.selected.push_back(m);
        sel.selected_seconds += d;
      } else {
        full = true;
        sel.excess.push_back(m);
      }
    }
    out.push_back(std::move(sel));
  }
  return out;
}

}  // namespace spkclust
