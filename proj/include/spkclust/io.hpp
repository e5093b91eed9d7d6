#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spkclust/core.hpp"
#include "spkclust/metrics.hpp"

namespace spkclust::io {

enum class EmbeddingFormat { kAuto, kText, kBinary };

EmbeddingFormat parse_embedding_format(std::string_view tag);

inline constexpr char kTextHeader[] = "id\tduration_seconds\tspeaker\tembedding";
inline constexpr char kBinaryMagic[4] = {'S', 'P', 'K', 'E'};
inline constexpr std::uint32_t kBinaryVersion = 1;
inline constexpr std::size_t kBinaryLabelWidth = 64;

struct LoadOptions {
  bool renormalize = false;
  EmbeddingFormat format = EmbeddingFormat::kAuto;
  double norm_tolerance = 1e-3;
};

Corpus load_embeddings(const std::filesystem::path& path, const LoadOptions& options = {});
Corpus read_embeddings_text(std::istream& in, const LoadOptions& options = {});
Corpus read_embeddings_binary(std::istream& in, const LoadOptions& options = {});

void save_embeddings(const Corpus& corpus, const std::filesystem::path& path,
                     EmbeddingFormat format = EmbeddingFormat::kText);
void write_embeddings_text(const Corpus& corpus, std::ostream& out);
void write_embeddings_binary(const Corpus& corpus, std::ostream& out);

struct AssignmentRow {
  std::string id;
  ClusterId cluster = kNoiseLabel;
  std::optional<bool> excess;
};

/// `excess`, when given, holds one flag per corpus index.
void save_assignments(const ClusteringResult& result, const Corpus& corpus,
                      const std::filesystem::path& path,
                      std::span<const char> excess = {});
void write_assignments(const ClusteringResult& result, const Corpus& corpus, std::ostream& out,
                       std::span<const char> excess = {});
std::vector<AssignmentRow> load_assignments(const std::filesystem::path& path);

/// Rebuilds clusters (with centroids) from assignment rows matched by id.
ClusteringResult result_from_assignments(const Corpus& corpus,
                                         std::span<const AssignmentRow> rows);

void write_stage_log(std::span<const StageRecord> log, std::ostream& out);
void save_stage_log(std::span<const StageRecord> log, const std::filesystem::path& path);

/// Key/value table of the headline metrics; percentages with 2 decimals.
std::string format_report(const EvaluationReport& report);
void save_report(const EvaluationReport& report, const std::filesystem::path& path);
/// Parses the fields written by format_report; other fields stay default.
EvaluationReport parse_report(std::istream& in);
EvaluationReport load_report(const std::filesystem::path& path);

void save_similarity_report(const SimilarityReport& report, const std::filesystem::path& path);

/// Writes to a sibling temporary file; commit() renames it into place.
/// Destruction without commit removes the temporary.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path target, bool binary = false);
  ~AtomicFile();
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  std::ostream& stream() { return out_; }
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path temp_;
  std::ofstream out_;
  bool committed_ = false;
};

}  // namespace spkclust::io
