#include "spkclust/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "spkclust/io.hpp"
#include "spkclust/metrics.hpp"
#include "spkclust/pipeline.hpp"
#include "spkclust/synthgen.hpp"

namespace spkclust::cli {

namespace {

enum class Verbosity { kQuiet, kNormal, kVerbose };

class Log {
 public:
  explicit Log(Verbosity v) : v_(v) {}
  template <typename... Args>
  void info(fmt::format_string<Args...> f, Args&&... args) const {
    if (v_ != Verbosity::kQuiet) emit("info", fmt::format(f, std::forward<Args>(args)...));
  }
  template <typename... Args>
  void debug(fmt::format_string<Args...> f, Args&&... args) const {
    if (v_ == Verbosity::kVerbose) emit("debug", fmt::format(f, std::forward<Args>(args)...));
  }
  static void error(const std::string& msg) { emit("error", msg); }

 private:
  static void emit(const char* level, const std::string& msg) {
    fmt::print(stderr, "spkclust [{}] {}\n", level, msg);
  }
  Verbosity v_;
};

struct ClusterArgs {
  std::string embeddings;
  std::string assignments;
  std::string stage_log;
  std::string format = "auto";
  bool renormalize = false;
  double duration_cap_seconds = 5400.0;
  PipelineParams params;
};

struct EvaluateArgs {
  std::string assignments;
  std::string embeddings;
  std::string out;
  std::string format = "auto";
  std::size_t min_utterances = 30;
  double top_fraction = 0.8;
};

struct SynthArgs {
  std::string out;
  std::string format = "text";
  SynthSpec spec;
  bool no_shuffle = false;
};

struct SimreportArgs {
  std::string embeddings;
  std::string out;
  std::string format = "auto";
  std::size_t bins = 100;
};

std::string env(const std::string& name) { return std::string(kEnvPrefix) + name; }

// CLI11 quietly ignores an environment value that fails its validator; we
// would rather reject it like the equivalent flag.
void check_env_values(const CLI::App& cmd) {
  for (const CLI::Option* opt : cmd.get_options()) {
    const std::string name = opt->get_envname();
    if (name.empty() || opt->count() > 0) continue;
    const char* value = std::getenv(name.c_str());
    if (value != nullptr && *value != '\0') {
      throw CLI::ValidationError(name, fmt::format("invalid value '{}'", value));
    }
  }
}

constexpr auto kMaxCount = std::numeric_limits<std::size_t>::max();

void add_pipeline_flags(CLI::App& cmd, PipelineParams& p) {
  cmd.add_option("--partial-set-size", p.partial_set_size,
                 "Utterances clustered together in one partial set")
      ->envname(env("PARTIAL_SET_SIZE"))
      ->check(CLI::Range(std::size_t{2}, kMaxCount))
      ->capture_default_str();
  cmd.add_option("--min-cluster-size", p.min_cluster_size, "Smallest grouping considered a cluster")
      ->envname(env("MIN_CLUSTER_SIZE"))
      ->check(CLI::Range(std::size_t{2}, kMaxCount))
      ->capture_default_str();
  cmd.add_option("--min-samples", p.min_samples, "Neighbourhood size defining a core point")
      ->envname(env("MIN_SAMPLES"))
      ->check(CLI::Range(std::size_t{1}, kMaxCount))
      ->capture_default_str();
  cmd.add_option("--fit-noise-on-similarity", p.fit_noise_on_similarity,
                 "Noise points join a cluster whose centroid similarity exceeds this")
      ->envname(env("FIT_NOISE_ON_SIMILARITY"))
      ->check(CLI::Range(-1.0, 1.0))
      ->capture_default_str();
  cmd.add_option("--merge-start", p.merge_start, "First centroid-merge threshold")
      ->envname(env("MERGE_START"))
      ->capture_default_str();
  cmd.add_option("--merge-end", p.merge_end, "Last centroid-merge threshold")
      ->envname(env("MERGE_END"))
      ->capture_default_str();
  cmd.add_option("--merge-step", p.merge_step, "Decrement between merge thresholds")
      ->envname(env("MERGE_STEP"))
      ->capture_default_str();
  cmd.add_option("--big-cluster-std-factor", p.big_cluster_std_factor,
                 "Clusters larger than mean + factor * std are re-split")
      ->envname(env("BIG_CLUSTER_STD_FACTOR"))
      ->capture_default_str();
  cmd.add_option("--threads", p.threads, "Worker threads (0 = auto)")
      ->envname(env("THREADS"))
      ->capture_default_str();
}

int cmd_cluster(const ClusterArgs& a, const Log& log) {
  PipelineParams params = a.params;
  params.speaker_duration_cap_seconds =
      a.duration_cap_seconds > 0.0 ? std::optional<double>(a.duration_cap_seconds) : std::nullopt;
  try {
    params.validate();
  } catch (const std::invalid_argument& e) {
    Log::error(e.what());
    return kUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  const auto corpus = io::load_embeddings(
      a.embeddings, {.renormalize = a.renormalize, .format = io::parse_embedding_format(a.format)});
  log.info("loaded {} utterances of dimension {} from {}", corpus.size(), corpus.dimension(),
           a.embeddings);

  const auto result = run_pipeline(corpus, params, [&](std::string_view stage, const ClusteringResult& r) {
    log.debug("stage {}: {} clusters, {} noise", stage, r.clusters.size(), r.noise.size());
  });

  std::vector<char> excess;
  if (params.speaker_duration_cap_seconds) {
    const bool any = std::any_of(corpus.utterances().begin(), corpus.utterances().end(),
                                 [](const Utterance& u) { return u.duration_seconds.has_value(); });
    if (any) {
      excess.assign(corpus.size(), 0);
      for (const auto& sel : cap_speaker_duration(result, corpus, *params.speaker_duration_cap_seconds)) {
        for (auto i : sel.excess) excess[i] = 1;
      }
    } else {
      log.info("no durations in input; skipping per-speaker duration cap");
    }
  }

  const std::string stage_log = a.stage_log.empty() ? a.assignments + ".stages.tsv" : a.stage_log;
  // Both outputs are staged before either is moved into place.
  io::AtomicFile assignments_file(a.assignments);
  io::AtomicFile stage_file(stage_log);
  io::write_assignments(result, corpus, assignments_file.stream(), excess);
  io::write_stage_log(result.stage_log, stage_file.stream());
  assignments_file.commit();
  stage_file.commit();

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log.info("{} clusters, {} noise utterances ({:.1f} s)", result.clusters.size(),
           result.noise.size(), secs);
  return kSuccess;
}

int cmd_evaluate(const EvaluateArgs& a, const Log& log) {
  const auto corpus = io::load_embeddings(
      a.embeddings, {.renormalize = true, .format = io::parse_embedding_format(a.format)});
  if (!corpus.has_all_labels()) {
    throw DataError(fmt::format("{}: evaluation needs a speaker label on every utterance",
                                a.embeddings));
  }
  const auto rows = io::load_assignments(a.assignments);
  const auto result = io::result_from_assignments(corpus, rows);
  const auto report = evaluate(result, corpus, a.min_utterances, a.top_fraction);
  io::save_report(report, a.out);
  log.info("{} clusters ({} after filtering < {}), purity {:.2f}%, uniqueness {:.2f}%",
           report.num_clusters_total, report.num_clusters_after_filter, a.min_utterances,
           100.0 * report.average_purity, 100.0 * report.cluster_uniqueness);
  log.debug("utterance-weighted purity {:.2f}%", 100.0 * report.weighted_purity);
  return kSuccess;
}

int cmd_synth(SynthArgs a, const Log& log) {
  a.spec.shuffle = !a.no_shuffle;
  try {
    a.spec.validate();
  } catch (const std::invalid_argument& e) {
    Log::error(e.what());
    return kUsage;
  }
  const auto format = io::parse_embedding_format(a.format);
  if (format == io::EmbeddingFormat::kAuto) {
    Log::error("--format must be text or binary");
    return kUsage;
  }
  const auto corpus = generate(a.spec);
  io::save_embeddings(corpus, a.out, format);
  log.info("wrote {} utterances from {} speakers to {}", corpus.size(), a.spec.num_speakers, a.out);
  return kSuccess;
}

int cmd_simreport(const SimreportArgs& a, const Log& log) {
  const auto corpus = io::load_embeddings(
      a.embeddings, {.renormalize = true, .format = io::parse_embedding_format(a.format)});
  const auto report = similarity_report(corpus, {.bins = a.bins});
  io::save_similarity_report(report, a.out);
  log.info("same-speaker mean {:.4f}, different-speaker mean {:.4f}, overlap {:.4f}",
           report.same.mean, report.different.mean, report.overlap);
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Speaker clustering of utterance embeddings", "spkclust"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Errors only");

  ClusterArgs cluster_args;
  auto* cluster = app.add_subcommand("cluster", "Cluster an embeddings file into speakers");
  cluster->add_option("-i,--embeddings", cluster_args.embeddings, "Input embeddings file")
      ->required();
  cluster->add_option("-o,--assignments", cluster_args.assignments, "Output assignments file")
      ->required();
  cluster->add_option("--stage-log", cluster_args.stage_log,
                      "Output stage log (default: <assignments>.stages.tsv)");
  cluster->add_option("--format", cluster_args.format, "Input format: auto, text or binary")
      ->check(CLI::IsMember({"auto", "text", "binary"}))
      ->capture_default_str();
  cluster->add_flag("--renormalize", cluster_args.renormalize,
                    "Scale input vectors to unit norm instead of rejecting them");
  cluster->add_option("--duration-cap-seconds", cluster_args.duration_cap_seconds,
                      "Per-speaker duration cap for the excess column (0 disables)")
      ->envname(env("DURATION_CAP_SECONDS"))
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  add_pipeline_flags(*cluster, cluster_args.params);

  EvaluateArgs eval_args;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score assignments against speaker labels");
  evaluate_cmd->add_option("-a,--assignments", eval_args.assignments, "Assignments file")
      ->required();
  evaluate_cmd->add_option("-i,--embeddings", eval_args.embeddings, "Labeled embeddings file")
      ->required();
  evaluate_cmd->add_option("-o,--out", eval_args.out, "Output report")->required();
  evaluate_cmd->add_option("--format", eval_args.format, "Input format: auto, text or binary")
      ->check(CLI::IsMember({"auto", "text", "binary"}))
      ->capture_default_str();
  evaluate_cmd->add_option("--min-utterances", eval_args.min_utterances,
                           "Clusters smaller than this are dropped before scoring")
      ->envname(env("MIN_UTTERANCES"))
      ->capture_default_str();
  evaluate_cmd->add_option("--top-fraction", eval_args.top_fraction,
                           "Fraction of largest clusters used for the coverage statistic")
      ->envname(env("TOP_FRACTION"))
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0))
      ->capture_default_str();

  SynthArgs synth_args;
  std::vector<std::size_t> per_speaker;
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic embeddings file");
  synth->add_option("-o,--out", synth_args.out, "Output embeddings file")->required();
  synth->add_option("--format", synth_args.format, "Output format: text or binary")
      ->check(CLI::IsMember({"text", "binary"}))
      ->capture_default_str();
  synth->add_option("--num-speakers", synth_args.spec.num_speakers, "Number of speakers")
      ->check(CLI::Range(std::size_t{1}, kMaxCount))
      ->capture_default_str();
  synth->add_option("--utterances-per-speaker", per_speaker,
                    "One count for all speakers, or a comma-separated count per speaker (default 150)")
      ->delimiter(',');
  synth->add_option("--dimension", synth_args.spec.dimension, "Embedding dimension")
      ->check(CLI::Range(std::size_t{2}, kMaxCount))
      ->capture_default_str();
  synth->add_option("--spread", synth_args.spec.angular_spread, "Per-utterance perturbation norm")
      ->capture_default_str();
  synth->add_option("--spread-variation", synth_args.spec.spread_variation,
                    "Log-scale spread of per-utterance noise magnitude")
      ->capture_default_str();
  synth->add_option("--seed", synth_args.spec.seed, "Random seed")->capture_default_str();
  synth->add_option("--duration-mean", synth_args.spec.duration_mean_seconds,
                    "Mean utterance duration in seconds")
      ->capture_default_str();
  synth->add_option("--confusable-fraction", synth_args.spec.confusable_fraction,
                    "Fraction of speakers placed in similar-voice pairs")
      ->capture_default_str();
  synth->add_option("--confusable-similarity", synth_args.spec.confusable_similarity,
                    "Direction similarity inside a confusable pair")
      ->capture_default_str();
  synth->add_flag("--no-shuffle", synth_args.no_shuffle, "Keep utterances grouped by speaker");

  SimreportArgs sim_args;
  auto* simreport = app.add_subcommand("simreport", "Histogram same vs different speaker similarities");
  simreport->add_option("-i,--embeddings", sim_args.embeddings, "Labeled embeddings file")
      ->required();
  simreport->add_option("-o,--out", sim_args.out, "Output histogram table")->required();
  simreport->add_option("--format", sim_args.format, "Input format: auto, text or binary")
      ->check(CLI::IsMember({"auto", "text", "binary"}))
      ->capture_default_str();
  simreport->add_option("--bins", sim_args.bins, "Histogram bins over [-1, 1]")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
      ->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    for (const CLI::App* sub : app.get_subcommands()) check_env_values(*sub);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kUsage;
  }

  const Log log(quiet ? Verbosity::kQuiet : verbose ? Verbosity::kVerbose : Verbosity::kNormal);
  try {
    if (*cluster) return cmd_cluster(cluster_args, log);
    if (*evaluate_cmd) return cmd_evaluate(eval_args, log);
    if (*synth) {
      if (!per_speaker.empty()) synth_args.spec.utterances_per_speaker = per_speaker;
      return cmd_synth(synth_args, log);
    }
    if (*simreport) return cmd_simreport(sim_args, log);
  } catch (const DataError& e) {
    Log::error(e.what());
    return kDataError;
  } catch (const std::invalid_argument& e) {
    Log::error(e.what());
    return kDataError;
  } catch (const std::exception& e) {
    Log::error(fmt::format("internal error: {}", e.what()));
    return kInternal;
  }
  return kUsage;
}

}  // namespace spkclust::cli
