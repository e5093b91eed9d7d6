#pragma once

// Seeded property checks over random inputs. Each returns how many cases ran
// and a description of the first violation, if any.

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracles.hpp"
#include "spkclust/metrics.hpp"
#include "spkclust/pipeline.hpp"

namespace props {

struct Outcome {
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;

  void fail(const std::string& why) {
    if (failures++ == 0) first_failure = why;
  }
  Outcome& operator+=(const Outcome& o) {
    cases += o.cases;
    if (failures == 0 && o.failures > 0) first_failure = o.first_failure;
    failures += o.failures;
    return *this;
  }
};

/// Blob corpus with a random number of speakers, sizes and spreads, in
/// speaker-major or shuffled order.
inline spkclust::Corpus random_corpus(oracle::Rng& rng, std::size_t max_points = 160) {
  const std::size_t dim = rng.index(8, 48);
  const std::size_t speakers = rng.index(1, 8);
  std::vector<oracle::Vec> vs;
  std::vector<std::string> labels;
  for (std::size_t s = 0; s < speakers && vs.size() < max_points; ++s) {
    const auto dir = rng.unit(dim);
    const double spread = rng.uniform(0.1, 1.5);
    const std::size_t count = std::min(rng.index(1, 40), max_points - vs.size());
    for (std::size_t i = 0; i < count; ++i) {
      vs.push_back(rng.around(dir, spread));
      labels.push_back("s" + std::to_string(s));
    }
  }
  // A few uniform outliers.
  for (std::size_t k = rng.index(0, 5); k > 0; --k) {
    vs.push_back(rng.unit(dim));
    labels.push_back("x" + std::to_string(k));
  }
  if (vs.size() < 2) {
    vs.push_back(rng.unit(dim));
    labels.push_back("x");
  }
  if (rng.uniform() < 0.5) {
    std::vector<std::size_t> order(vs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::vector<oracle::Vec> v2;
    std::vector<std::string> l2;
    for (auto i : order) {
      v2.push_back(vs[i]);
      l2.push_back(labels[i]);
    }
    vs.swap(v2);
    labels.swap(l2);
  }
  return oracle::make_corpus(vs, labels);
}

inline spkclust::PipelineParams random_params(oracle::Rng& rng, std::size_t n) {
  spkclust::PipelineParams p;
  p.min_cluster_size = rng.index(2, 6);
  p.min_samples = rng.index(1, p.min_cluster_size);
  p.partial_set_size = std::max(p.min_cluster_size, rng.index(std::min<std::size_t>(n, 20), n + 10));
  p.fit_noise_on_similarity = rng.uniform(0.3, 0.95);
  p.big_cluster_std_factor = rng.uniform(0.5, 2.5);
  p.threads = rng.index(1, 3);
  return p;
}

/// Independent check that clusters and noise partition [0, n).
inline std::string partition_violation(const spkclust::ClusteringResult& r, std::size_t n) {
  std::vector<int> hits(n, 0);
  std::map<spkclust::ClusterId, int> ids;
  for (const auto& c : r.clusters) {
    if (c.members.empty()) return fmt::format("cluster {} is empty", c.id);
    if (++ids[c.id] > 1) return fmt::format("cluster id {} repeated", c.id);
    for (auto m : c.members) {
      if (m >= n) return fmt::format("member {} out of range", m);
      ++hits[m];
    }
  }
  for (auto m : r.noise) {
    if (m >= n) return fmt::format("noise index {} out of range", m);
    ++hits[m];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i] != 1) return fmt::format("index {} covered {} times", i, hits[i]);
  }
  return "";
}

/// Partition invariant after every pipeline stage (and after filtering).
inline Outcome pipeline_partition(std::uint64_t seed, std::size_t cases) {
  Outcome out;
  oracle::Rng rng(seed);
  for (std::size_t t = 0; t < cases; ++t) {
    const auto corpus = random_corpus(rng);
    const auto params = random_params(rng, corpus.size());
    std::size_t stages = 0;
    const auto result = spkclust::run_pipeline(
        corpus, params, [&](std::string_view stage, const spkclust::ClusteringResult& r) {
          ++stages;
          const auto v = partition_violation(r, corpus.size());
          if (!v.empty()) out.fail(fmt::format("case {} stage {}: {}", t, stage, v));
        });
    if (stages != 5) out.fail(fmt::format("case {}: {} stages observed", t, stages));
    const auto f = spkclust::filter_small_clusters(result, rng.index(0, 40));
    const auto v = partition_violation(f, corpus.size());
    if (!v.empty()) out.fail(fmt::format("case {} after filter: {}", t, v));
    ++out.cases;
  }
  return out;
}

/// Arbitrary clusters over a random corpus: random disjoint member groups.
inline std::vector<spkclust::Cluster> random_clusters(oracle::Rng& rng,
                                                      const spkclust::Corpus& corpus,
                                                      std::vector<std::size_t>* leftover) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<spkclust::Cluster> clusters;
  std::size_t pos = 0;
  spkclust::ClusterId id = static_cast<spkclust::ClusterId>(rng.index(0, 5));
  while (pos < order.size()) {
    const std::size_t len = std::min(order.size() - pos, rng.index(1, 12));
    std::vector<std::size_t> members(order.begin() + pos, order.begin() + pos + len);
    pos += len;
    if (leftover != nullptr && rng.uniform() < 0.25) {
      leftover->insert(leftover->end(), members.begin(), members.end());
      continue;
    }
    try {
      clusters.push_back(spkclust::make_cluster(corpus, id, members));
      id += static_cast<spkclust::ClusterId>(rng.index(1, 3));
    } catch (const std::invalid_argument&) {
      if (leftover != nullptr) leftover->insert(leftover->end(), members.begin(), members.end());
    }
  }
  if (leftover != nullptr) std::sort(leftover->begin(), leftover->end());
  return clusters;
}

/// merge_clusters: idempotent at a fixed schedule, never shrinks a cluster,
/// never increases the count, keeps the member union.
inline Outcome merge_idempotence(std::uint64_t seed, std::size_t cases) {
  Outcome out;
  oracle::Rng rng(seed);
  for (std::size_t t = 0; t < cases; ++t) {
    const auto corpus = random_corpus(rng, 80);
    auto clusters = random_clusters(rng, corpus, nullptr);
    const double start = rng.uniform(0.5, 0.99);
    const auto schedule = spkclust::MergeSchedule::linear(start, start - rng.uniform(0.0, 0.3), 0.01);
    const auto once = spkclust::merge_clusters(corpus, clusters, schedule);
    const auto twice = spkclust::merge_clusters(corpus, once, schedule);
    ++out.cases;
    if (once.size() > clusters.size()) out.fail(fmt::format("case {}: count grew", t));
    if (twice.size() != once.size()) {
      out.fail(fmt::format("case {}: second run changed count {} -> {}", t, once.size(), twice.size()));
      continue;
    }
    for (std::size_t k = 0; k < once.size(); ++k) {
      if (once[k].id != twice[k].id || once[k].members != twice[k].members) {
        out.fail(fmt::format("case {}: second run changed cluster {}", t, once[k].id));
      }
    }
    std::map<spkclust::ClusterId, std::size_t> before;
    std::map<std::size_t, spkclust::ClusterId> owner_after;
    for (const auto& c : once) {
      for (auto m : c.members) owner_after[m] = c.id;
    }
    std::size_t total_before = 0, total_after = 0;
    for (const auto& c : clusters) total_before += c.size();
    for (const auto& c : once) total_after += c.size();
    if (total_before != total_after) out.fail(fmt::format("case {}: member count changed", t));
    for (const auto& c : clusters) {
      // Each input cluster lands whole inside one output cluster no smaller than it.
      const auto target = owner_after.at(c.members.front());
      for (auto m : c.members) {
        if (owner_after.at(m) != target) out.fail(fmt::format("case {}: cluster {} torn apart", t, c.id));
      }
      const auto it = std::find_if(once.begin(), once.end(),
                                   [&](const spkclust::Cluster& x) { return x.id == target; });
      if (it->size() < c.size()) out.fail(fmt::format("case {}: cluster {} shrank", t, c.id));
      if (target > c.id) out.fail(fmt::format("case {}: survivor id {} > {}", t, target, c.id));
    }
  }
  return out;
}

/// assign_noise never unassigns a clustered point, remaining noise is a
/// subset of the input noise, and the result still partitions the corpus.
inline Outcome assign_noise_monotone(std::uint64_t seed, std::size_t cases) {
  Outcome out;
  oracle::Rng rng(seed);
  for (std::size_t t = 0; t < cases; ++t) {
    const auto corpus = random_corpus(rng, 80);
    std::vector<std::size_t> noise;
    const auto clusters = random_clusters(rng, corpus, &noise);
    const double thr = rng.uniform(-0.2, 0.99);
    const auto r = spkclust::assign_noise(corpus, clusters, noise, thr);
    ++out.cases;
    std::map<spkclust::ClusterId, const spkclust::Cluster*> after;
    for (const auto& c : r.clusters) after[c.id] = &c;
    if (after.size() != clusters.size()) out.fail(fmt::format("case {}: cluster count changed", t));
    for (const auto& c : clusters) {
      const auto it = after.find(c.id);
      if (it == after.end()) {
        out.fail(fmt::format("case {}: cluster {} vanished", t, c.id));
        continue;
      }
      if (!std::includes(it->second->members.begin(), it->second->members.end(), c.members.begin(),
                         c.members.end())) {
        out.fail(fmt::format("case {}: cluster {} lost members", t, c.id));
      }
    }
    if (!std::includes(noise.begin(), noise.end(), r.remaining_noise.begin(), r.remaining_noise.end())) {
      out.fail(fmt::format("case {}: remaining noise not a subset", t));
    }
    spkclust::ClusteringResult res{r.clusters, r.remaining_noise, {}};
    const auto v = partition_violation(res, corpus.size());
    if (!v.empty()) out.fail(fmt::format("case {}: {}", t, v));
    // A noise point left behind must not exceed the threshold against any input centroid.
    for (auto i : r.remaining_noise) {
      for (const auto& c : clusters) {
        if (1.0 - oracle::cosine_distance(corpus[i].embedding, c.centroid) > thr + 1e-12) {
          out.fail(fmt::format("case {}: point {} should have been assigned", t, i));
        }
      }
    }
  }
  return out;
}

/// filter_small_clusters keeps exactly the clusters with size >= threshold.
inline Outcome filter_boundary(std::uint64_t seed, std::size_t cases) {
  Outcome out;
  oracle::Rng rng(seed);
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t threshold = rng.index(0, 40);
    spkclust::ClusteringResult r;
    std::size_t next = 0;
    for (std::size_t k = rng.index(0, 8); k > 0; --k) {
      // Sizes cluster around the threshold so the boundary is exercised.
      const std::size_t raw = threshold + rng.index(0, 4);
      const std::size_t size = raw > 3 ? raw - 2 : 1;
      spkclust::Cluster c;
      c.id = static_cast<spkclust::ClusterId>(k);
      c.members.resize(size);
      std::iota(c.members.begin(), c.members.end(), next);
      next += size;
      r.clusters.push_back(std::move(c));
    }
    for (std::size_t k = rng.index(0, 5); k > 0; --k) r.noise.push_back(next++);
    std::reverse(r.clusters.begin(), r.clusters.end());
    const auto f = spkclust::filter_small_clusters(r, threshold);
    ++out.cases;
    std::size_t expect_kept = 0, expect_noise = r.noise.size();
    for (const auto& c : r.clusters) {
      if (c.size() >= threshold) {
        ++expect_kept;
      } else {
        expect_noise += c.size();
      }
    }
    if (f.clusters.size() != expect_kept || f.noise.size() != expect_noise) {
      out.fail(fmt::format("case {}: threshold {} kept {} (want {})", t, threshold, f.clusters.size(),
                           expect_kept));
    }
    for (const auto& c : f.clusters) {
      if (c.size() < threshold) out.fail(fmt::format("case {}: kept cluster of {}", t, c.size()));
    }
    const auto v = partition_violation(f, next);
    if (!v.empty()) out.fail(fmt::format("case {}: {}", t, v));
  }
  return out;
}

/// split_big_cluster: surviving members plus new noise equal the input.
inline Outcome split_union(std::uint64_t seed, std::size_t cases) {
  Outcome out;
  oracle::Rng rng(seed);
  for (std::size_t t = 0; t < cases; ++t) {
    const auto corpus = random_corpus(rng, 120);
    std::vector<std::size_t> all(corpus.size());
    std::iota(all.begin(), all.end(), 0);
    spkclust::Cluster big;
    try {
      big = spkclust::make_cluster(corpus, 3, all);
    } catch (const std::invalid_argument&) {
      continue;
    }
    auto params = random_params(rng, corpus.size());
    spkclust::ClusterIdSource ids(10);
    const auto r = spkclust::split_big_cluster(corpus, big, params, ids);
    ++out.cases;
    std::vector<std::size_t> covered = r.noise;
    for (const auto& c : r.clusters) covered.insert(covered.end(), c.members.begin(), c.members.end());
    std::sort(covered.begin(), covered.end());
    if (covered != all) out.fail(fmt::format("case {}: members not preserved", t));
    if (!r.split && (r.clusters.size() != 1 || !r.noise.empty())) {
      out.fail(fmt::format("case {}: unsplit result altered", t));
    }
    if (r.split && r.clusters.size() < 2) out.fail(fmt::format("case {}: split into < 2", t));
  }
  return out;
}

}  // namespace props
