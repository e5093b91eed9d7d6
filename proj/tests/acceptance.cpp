// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracles.hpp"
#include "properties.hpp"
#include "spkclust/cli.hpp"
#include "spkclust/geometry.hpp"
#include "spkclust/hdbscan.hpp"
#include "spkclust/io.hpp"
#include "spkclust/metrics.hpp"
#include "spkclust/pipeline.hpp"
#include "spkclust/synthgen.hpp"
#include "tempdir.hpp"

using namespace spkclust;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

// Runs `check` and prints its verdict. A criterion over its time budget fails
// even when the check itself passed.
void criterion(const std::string& name, double budget_seconds, const std::function<Verdict()>& check) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, fmt::format("exception: {}", e.what())};
  }
  const double took = seconds_since(t0);
  if (budget_seconds > 0.0 && took >= budget_seconds) {
    v.pass = false;
    v.detail += fmt::format("; over budget {:.0f}s", budget_seconds);
  }
  if (!v.pass) ++failures;
  fmt::print("{} {}: {} ({:.2f}s)\n", v.pass ? "PASS" : "FAIL", name, v.detail, took);
  std::fflush(stdout);
}

DistanceMatrix cosine_dm(const std::vector<oracle::Vec>& pts) {
  return pairwise_distance_matrix(std::span<const Embedding>(pts), {1});
}

Verdict single_linkage_oracle() {
  oracle::Rng rng(101);
  double worst = 0.0;
  std::size_t bad = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = rng.index(2, 10);
    const std::size_t dim = rng.index(3, 24);
    std::vector<oracle::Vec> pts;
    const auto dir = rng.unit(dim);
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back(rng.uniform() < 0.5 ? rng.around(dir, rng.uniform(0.1, 1.0)) : rng.unit(dim));
    }
    const std::size_t ms = rng.index(1, n - 1);
    const auto dm = cosine_dm(pts);
    const auto d = build_hierarchy(minimum_spanning_tree(dm, core_distances(dm, ms)), n);
    const auto m = oracle::distance_matrix(pts);
    const auto want = oracle::single_linkage_heights(oracle::mutual_reachability(m, oracle::core_distances(m, ms)));
    if (d.merges.size() != want.size()) {
      ++bad;
      continue;
    }
    bool ok = true;
    for (std::size_t k = 0; k < want.size(); ++k) {
      const double err = std::abs(d.merges[k].distance - want[k]);
      worst = std::max(worst, err);
      if (err > 1e-12) ok = false;
    }
    if (!ok || d.merges.back().size != n) ++bad;
  }
  return {bad == 0, fmt::format("200 corpora, {} mismatches, max |dh| = {:.2e}", bad, worst)};
}

Verdict mst_oracle() {
  oracle::Rng rng(102);
  double worst = 0.0;
  std::size_t bad = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = rng.index(2, 8);
    const auto m = oracle::random_symmetric(rng, n);
    const auto mst = minimum_spanning_tree(oracle::to_dm(m));
    double total = 0.0;
    for (const auto& e : mst) total += e.weight;
    const double err = std::abs(total - oracle::exhaustive_mst_weight(m));
    worst = std::max(worst, err);
    if (mst.size() != n - 1 || err > 1e-12) ++bad;
  }
  return {bad == 0, fmt::format("100 matrices, {} mismatches, max |dw| = {:.2e}", bad, worst)};
}

/// Tight sub-blobs inside a loose blob, plus an unrelated blob.
std::vector<oracle::Vec> nested_blobs(oracle::Rng& rng) {
  const std::size_t dim = 16;
  const auto p = rng.unit(dim);
  const auto q1 = rng.around(p, 0.35);
  const auto q2 = rng.around(p, 0.35);
  const std::size_t sub = rng.index(5, 10);
  std::vector<oracle::Vec> pts;
  for (std::size_t i = 0; i < sub; ++i) pts.push_back(rng.around(q1, 0.08));
  for (std::size_t i = 0; i < sub; ++i) pts.push_back(rng.around(q2, 0.08));
  for (std::size_t i = rng.index(0, 6); i > 0; --i) pts.push_back(rng.around(p, 0.5));
  const auto r = rng.unit(dim);
  for (std::size_t i = rng.index(0, 10); i > 0; --i) pts.push_back(rng.around(r, 0.3));
  return pts;
}

Verdict eom_oracle() {
  oracle::Rng rng(103);
  std::size_t bad = 0, unique = 0, largest = 0;
  for (int t = 0; t < 50; ++t) {
    const auto pts = nested_blobs(rng);
    largest = std::max(largest, pts.size());
    const std::size_t mcs = rng.index(3, 5);
    const std::size_t ms = rng.index(1, 2);
    const auto dm = cosine_dm(pts);
    const auto tree = condense_tree(build_hierarchy(minimum_spanning_tree(dm, core_distances(dm, ms)), pts.size()), mcs);
    const auto eom = select_clusters(tree, SelectionMethod::kExcessOfMass);
    const auto best = oracle::max_stability_antichain(tree);
    const auto stab = oracle::stabilities(tree);
    double total = 0.0;
    for (auto c : eom.selected) total += stab.at(c);
    bool ok = std::abs(total - best.best) <= 1e-9 * std::max(1.0, std::abs(best.best));
    if (best.optimal_count == 1) {
      ++unique;
      ok = ok && std::set<std::size_t>(eom.selected.begin(), eom.selected.end()) == best.selection;
    }
    if (!ok) ++bad;
  }
  return {bad == 0 && largest <= 40,
          fmt::format("50 corpora (n <= {}), {} with a unique optimum, {} mismatches", largest, unique, bad)};
}

/// 80 speakers with 50..200 utterances each; more than 10000 in total so the
/// default partial set size yields two partitions.
Corpus end_to_end_corpus() {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> count(50, 200);
  SynthSpec spec;
  spec.num_speakers = 80;
  spec.utterances_per_speaker.clear();
  for (std::size_t s = 0; s < spec.num_speakers; ++s) spec.utterances_per_speaker.push_back(count(rng));
  spec.dimension = 256;
  spec.confusable_fraction = 0.1;
  spec.confusable_similarity = 0.9;
  spec.seed = 7;
  return generate(spec);
}

struct EndToEnd {
  std::size_t utterances = 0;
  std::size_t partitions = 0;
  double seconds = 0.0;
  EvaluationReport report;
};

const EndToEnd& end_to_end() {
  static const EndToEnd run = [] {
    EndToEnd e;
    const auto corpus = end_to_end_corpus();
    const PipelineParams params;
    e.utterances = corpus.size();
    e.partitions = partition_corpus(corpus.size(), params.partial_set_size, params.min_cluster_size).size();
    const auto t0 = Clock::now();
    const auto result = run_pipeline(corpus, params);
    e.seconds = seconds_since(t0);
    e.report = evaluate(result, corpus, 30, 0.8);
    return e;
  }();
  return run;
}

Verdict end_to_end_quality() {
  const auto& e = end_to_end();
  const auto& r = e.report;
  const bool ok = e.partitions >= 2 && r.average_purity >= 0.95 && r.cluster_uniqueness >= 0.80 &&
                  r.noise_fraction <= 0.05 && e.seconds < 300.0;
  return {ok, fmt::format("{} utterances in {} partitions, {} clusters, purity {:.4f} (>= 0.95), "
                          "uniqueness {:.4f} (>= 0.80), noise {:.4f} (<= 0.05), pipeline {:.1f}s",
                          e.utterances, e.partitions, r.num_clusters_after_filter, r.average_purity,
                          r.cluster_uniqueness, r.noise_fraction, e.seconds)};
}

Verdict end_to_end_coverage() {
  const auto& r = end_to_end().report;
  return {r.coverage >= 0.95, fmt::format("coverage {:.4f} (>= 0.95) over {} clusters", r.coverage,
                                          r.num_clusters_after_filter)};
}

Verdict merge_reunification() {
  // Speaker blocks of 40; the first 20 of every speaker go to partition 0.
  SynthSpec spec;
  spec.num_speakers = 10;
  spec.utterances_per_speaker = {40};
  spec.seed = 11;
  spec.shuffle = false;
  const auto blocks = generate(spec);
  std::vector<Utterance> utts;
  for (std::size_t half = 0; half < 2; ++half) {
    for (std::size_t s = 0; s < 10; ++s) {
      for (std::size_t i = 0; i < 20; ++i) utts.push_back(blocks[s * 40 + half * 20 + i]);
    }
  }
  const Corpus corpus(std::move(utts), blocks.dimension());
  PipelineParams params;
  params.partial_set_size = 200;
  const auto ranges = partition_corpus(corpus.size(), params.partial_set_size, params.min_cluster_size);

  ClusteringResult merged;
  std::size_t partition_clusters = 0;
  run_pipeline(corpus, params, [&](std::string_view stage, const ClusteringResult& r) {
    if (stage == "partition") partition_clusters = r.clusters.size();
    if (stage == "merge_1") merged = r;
  });
  const auto labels = speaker_labels(corpus);
  double min_purity = 1.0;
  std::set<std::string> dominant;
  for (const auto& c : merged.clusters) {
    const auto p = cluster_purity(c.members, labels);
    min_purity = std::min(min_purity, p.purity);
    dominant.insert(p.dominant_speaker);
  }
  const bool ok = ranges.size() == 2 && merged.clusters.size() == 10 && min_purity == 1.0 &&
                  dominant.size() == 10;
  return {ok, fmt::format("{} partitions, {} partition clusters -> {} after merge_1, min purity {:.4f}",
                          ranges.size(), partition_clusters, merged.clusters.size(), min_purity)};
}

Verdict split_safety() {
  std::size_t fused_ok = 0, homogeneous_ok = 0;
  std::string misses;
  const std::vector<std::uint64_t> seeds{3, 4, 5, 6, 7};
  for (auto seed : seeds) {
    SynthSpec spec;
    spec.utterances_per_speaker = {100};
    spec.seed = seed;
    spec.shuffle = false;
    spec.num_speakers = 2;
    const auto pair = generate(spec);
    std::vector<std::size_t> all(200);
    std::iota(all.begin(), all.end(), 0);
    ClusterIdSource ids(1);
    const auto fused = split_big_cluster(pair, make_cluster(pair, 0, all), PipelineParams{}, ids);
    const auto labels = speaker_labels(pair);
    bool pure = true;
    for (const auto& c : fused.clusters) pure = pure && cluster_purity(c.members, labels).purity == 1.0;
    if (fused.split && fused.clusters.size() == 2 && pure) {
      ++fused_ok;
    } else {
      misses += fmt::format("; seed {}: {} clusters, {} noise", seed, fused.clusters.size(), fused.noise.size());
    }

    spec.num_speakers = 1;
    spec.utterances_per_speaker = {200};
    const auto one = generate(spec);
    ClusterIdSource ids2(1);
    const auto blob = make_cluster(one, 0, all);
    const auto same = split_big_cluster(one, blob, PipelineParams{}, ids2);
    if (!same.split && same.clusters.size() == 1 && same.clusters[0].id == 0 &&
        same.clusters[0].members == all && same.noise.empty()) {
      ++homogeneous_ok;
    } else {
      misses += fmt::format("; seed {}: homogeneous cluster altered", seed);
    }
  }
  const bool ok = fused_ok == seeds.size() && homogeneous_ok == seeds.size();
  return {ok, fmt::format("fused pairs split into 2 pure clusters {}/{}, homogeneous unchanged {}/{}{}",
                          fused_ok, seeds.size(), homogeneous_ok, seeds.size(), misses)};
}

Verdict metric_exactness() {
  // 67 speakers own one cluster each; 6 more speakers own two each: 79 clusters.
  const std::size_t per = 30;
  std::vector<Utterance> utts;
  ClusteringResult result;
  ClusterId id = 0;
  auto add_cluster = [&](const std::string& speaker) {
    Cluster c;
    c.id = id++;
    for (std::size_t i = 0; i < per; ++i) {
      c.members.push_back(utts.size());
      utts.push_back({fmt::format("u{}", utts.size()), {1.0}, std::nullopt, speaker});
    }
    result.clusters.push_back(std::move(c));
  };
  for (int s = 0; s < 67; ++s) add_cluster(fmt::format("one{:02}", s));
  for (int s = 0; s < 6; ++s) {
    add_cluster(fmt::format("two{}", s));
    add_cluster(fmt::format("two{}", s));
  }
  const Corpus corpus(std::move(utts), 1);
  const auto report = evaluate(result, corpus, 30, 0.8);
  const auto text = io::format_report(report);
  const bool table = report.num_clusters_after_filter == 79 &&
                     report.speakers_with_one_dominant_cluster == 67 &&
                     text.find("\ncluster_uniqueness_percent\t84.81\n") != std::string::npos;

  const std::vector<std::string> labels{"A", "A", "A", "B"};
  const std::vector<std::size_t> members{0, 1, 2, 3};
  const auto p = cluster_purity(members, labels);
  const bool eq1 = p.purity == 0.75 && p.dominant_speaker == "A" && p.dominant_count == 3;
  return {table && eq1, fmt::format("67/79 -> {:.2f}%, {{A:3,B:1}} -> {}", 100.0 * report.cluster_uniqueness,
                                    p.purity)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict cli_determinism() {
  test::TempDir dir;
  const auto input = (dir / "corpus.tsv").string();
  if (cli::run({"synth", "-q", "-o", input, "--num-speakers", "20", "--utterances-per-speaker", "60",
                "--dimension", "128", "--confusable-fraction", "0.2", "--seed", "9"}) != cli::kSuccess) {
    return {false, "synth failed"};
  }
  const std::vector<std::string> threads{"1", "1", "4", "0"};
  std::vector<std::string> assignments, stages;
  for (std::size_t k = 0; k < threads.size(); ++k) {
    const auto out = (dir / fmt::format("a{}.tsv", k)).string();
    if (cli::run({"cluster", "-q", "-i", input, "-o", out, "--partial-set-size", "500", "--threads",
                  threads[k]}) != cli::kSuccess) {
      return {false, fmt::format("cluster run {} failed", k)};
    }
    assignments.push_back(slurp(out));
    stages.push_back(slurp(out + ".stages.tsv"));
  }
  bool same = !assignments[0].empty() && !stages[0].empty();
  for (std::size_t k = 1; k < threads.size(); ++k) {
    same = same && assignments[k] == assignments[0] && stages[k] == stages[0];
  }
  return {same, fmt::format("{} runs (--threads 1,1,4,0), assignments {} bytes, identical: {}",
                            threads.size(), assignments[0].size(), same ? "yes" : "no")};
}

Verdict invariant_suite() {
  props::Outcome all;
  std::vector<std::string> parts;
  auto add = [&](const char* name, const props::Outcome& o) {
    all += o;
    parts.push_back(fmt::format("{} {}/{}", name, o.cases - std::min(o.cases, o.failures), o.cases));
  };
  add("partition", props::pipeline_partition(201, 300));
  add("merge", props::merge_idempotence(202, 300));
  add("assign_noise", props::assign_noise_monotone(203, 300));
  add("filter", props::filter_boundary(204, 300));
  add("split", props::split_union(205, 100));
  std::string detail = fmt::format("{} cases, {} violations [", all.cases, all.failures);
  for (std::size_t k = 0; k < parts.size(); ++k) detail += (k ? ", " : "") + parts[k];
  detail += "]";
  if (all.failures > 0) detail += "; first: " + all.first_failure;
  return {all.failures == 0 && all.cases >= 1000, detail};
}

}  // namespace

int main() {
  criterion("oracle single linkage", 10.0, single_linkage_oracle);
  criterion("oracle mst", 30.0, mst_oracle);
  criterion("oracle eom", 60.0, eom_oracle);
  criterion("end-to-end synthetic", 300.0, end_to_end_quality);
  criterion("coverage", 0.0, end_to_end_coverage);
  criterion("merge reunification", 30.0, merge_reunification);
  criterion("big-cluster split safety", 30.0, split_safety);
  criterion("metric exactness", 0.0, metric_exactness);
  criterion("cli determinism", 0.0, cli_determinism);
  criterion("invariant suite", 120.0, invariant_suite);
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
