#include "spkclust/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "spkclust/geometry.hpp"

namespace spkclust::io {

namespace fs = std::filesystem;

EmbeddingFormat parse_embedding_format(std::string_view tag) {
  if (tag == "auto") return EmbeddingFormat::kAuto;
  if (tag == "text") return EmbeddingFormat::kText;
  if (tag == "binary") return EmbeddingFormat::kBinary;
  throw std::invalid_argument(fmt::format("unknown embedding format '{}'", tag));
}

AtomicFile::AtomicFile(fs::path target, bool binary)
    : target_(std::move(target)), temp_(target_.string() + ".partial") {
  out_.open(temp_, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out_) throw DataError(fmt::format("cannot open '{}' for writing", target_.string()));
}

AtomicFile::~AtomicFile() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    fs::remove(temp_, ec);
  }
}

void AtomicFile::commit() {
  out_.flush();
  if (!out_) throw DataError(fmt::format("failed writing '{}'", target_.string()));
  out_.close();
  std::error_code ec;
  fs::rename(temp_, target_, ec);
  if (ec) {
    throw DataError(fmt::format("cannot move output into '{}': {}", target_.string(), ec.message()));
  }
  committed_ = true;
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

/// Shared validation for both formats; `row` is used in messages only.
class CorpusBuilder {
 public:
  explicit CorpusBuilder(const LoadOptions& options) : options_(options) {}

  void add(std::size_t row, Utterance u) {
    if (u.id.empty()) throw DataError(fmt::format("row {}: empty utterance id", row));
    if (dimension_ == 0) dimension_ = u.embedding.size();
    if (u.embedding.size() != dimension_) {
      throw DataError(fmt::format("row {}: dimension {} differs from {} in earlier rows", row,
                                  u.embedding.size(), dimension_));
    }
    for (double x : u.embedding) {
      if (!std::isfinite(x)) throw DataError(fmt::format("row {}: non-finite value", row));
    }
    if (u.duration_seconds && !(*u.duration_seconds > 0.0 && std::isfinite(*u.duration_seconds))) {
      throw DataError(fmt::format("row {}: duration must be positive", row));
    }
    const double norm = l2_norm(u.embedding);
    if (!(norm > 0.0)) throw DataError(fmt::format("row {}: zero vector", row));
    if (options_.renormalize) {
      for (auto& x : u.embedding) x /= norm;
    } else if (std::abs(norm - 1.0) > options_.norm_tolerance) {
      throw DataError(fmt::format("row {}: embedding norm {} is not 1 (use renormalization)",
                                  row, norm));
    }
    if (!ids_.insert(u.id).second) {
      throw DataError(fmt::format("row {}: duplicate utterance id '{}'", row, u.id));
    }
    utterances_.push_back(std::move(u));
  }

  Corpus build() && {
    if (utterances_.empty()) throw DataError("embedding file contains no utterances");
    return Corpus(std::move(utterances_), dimension_);
  }

 private:
  const LoadOptions& options_;
  std::size_t dimension_ = 0;
  std::unordered_set<std::string> ids_;
  std::vector<Utterance> utterances_;
};

}  // namespace

Corpus read_embeddings_text(std::istream& in, const LoadOptions& options) {
  CorpusBuilder builder(options);
  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kTextHeader) {
        throw DataError(fmt::format("row {}: expected header '{}'", row, kTextHeader));
      }
      header_seen = true;
      continue;
    }
    const auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw DataError(fmt::format("row {}: expected 4 tab-separated fields, got {}", row,
                                  fields.size()));
    }
    Utterance u;
    u.id = std::string(fields[0]);
    if (!fields[1].empty()) {
      const auto d = parse_double(fields[1]);
      if (!d) throw DataError(fmt::format("row {}: bad duration '{}'", row, fields[1]));
      u.duration_seconds = *d;
    }
    if (!fields[2].empty()) u.true_speaker = std::string(fields[2]);
    for (auto v : split(fields[3], ',')) {
      const auto x = parse_double(v);
      if (!x) throw DataError(fmt::format("row {}: bad embedding value '{}'", row, v));
      u.embedding.push_back(*x);
    }
    builder.add(row, std::move(u));
  }
  if (!header_seen) throw DataError("embedding file has no header row");
  return std::move(builder).build();
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void put_label(std::ostream& out, std::string_view s, std::string_view what) {
  if (s.size() >= kBinaryLabelWidth) {
    throw DataError(fmt::format("{} '{}' exceeds {} bytes", what, s, kBinaryLabelWidth - 1));
  }
  char buf[kBinaryLabelWidth] = {};
  std::memcpy(buf, s.data(), s.size());
  out.write(buf, kBinaryLabelWidth);
}

bool read_exact(std::istream& in, unsigned char* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint64_t get_le(const unsigned char* b, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::string get_label(const unsigned char* b) {
  const auto* s = reinterpret_cast<const char*>(b);
  return std::string(s, strnlen(s, kBinaryLabelWidth));
}

}  // namespace

Corpus read_embeddings_binary(std::istream& in, const LoadOptions& options) {
  unsigned char header[20];
  if (!read_exact(in, header, sizeof(header))) throw DataError("truncated binary header");
  if (std::memcmp(header, kBinaryMagic, 4) != 0) throw DataError("bad binary magic");
  const auto version = static_cast<std::uint32_t>(get_le(header + 4, 4));
  if (version != kBinaryVersion) {
    throw DataError(fmt::format("unsupported binary version {}", version));
  }
  const auto dim = static_cast<std::size_t>(get_le(header + 8, 4));
  const auto count = get_le(header + 12, 8);
  if (dim == 0) throw DataError("binary header declares dimension 0");

  CorpusBuilder builder(options);
  std::vector<unsigned char> record(2 * kBinaryLabelWidth + 4 + 4 * dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    if (!read_exact(in, record.data(), record.size())) {
      throw DataError(fmt::format("record {}: truncated", r + 1));
    }
    Utterance u;
    u.id = get_label(record.data());
    const std::string speaker = get_label(record.data() + kBinaryLabelWidth);
    if (!speaker.empty()) u.true_speaker = speaker;
    const unsigned char* p = record.data() + 2 * kBinaryLabelWidth;
    const float duration = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4)));
    if (!std::isnan(duration)) u.duration_seconds = duration;
    p += 4;
    u.embedding.resize(dim);
    for (std::size_t k = 0; k < dim; ++k, p += 4) {
      u.embedding[k] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4)));
    }
    builder.add(static_cast<std::size_t>(r + 1), std::move(u));
  }
  return std::move(builder).build();
}

Corpus load_embeddings(const fs::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open embeddings file '{}'", path.string()));
  EmbeddingFormat format = options.format;
  if (format == EmbeddingFormat::kAuto) {
    char magic[4] = {};
    in.read(magic, 4);
    const bool binary = in.gcount() == 4 && std::memcmp(magic, kBinaryMagic, 4) == 0;
    in.clear();
    in.seekg(0);
    format = binary ? EmbeddingFormat::kBinary : EmbeddingFormat::kText;
  }
  try {
    return format == EmbeddingFormat::kBinary ? read_embeddings_binary(in, options)
                                              : read_embeddings_text(in, options);
  } catch (const DataError& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_embeddings_text(const Corpus& corpus, std::ostream& out) {
  out << kTextHeader << '\n';
  std::string line;
  for (const auto& u : corpus.utterances()) {
    line.clear();
    line += u.id;
    line += '\t';
    if (u.duration_seconds) append_double(line, *u.duration_seconds);
    line += '\t';
    if (u.true_speaker) line += *u.true_speaker;
    line += '\t';
    for (std::size_t k = 0; k < u.embedding.size(); ++k) {
      if (k) line += ',';
      append_double(line, u.embedding[k]);
    }
    line += '\n';
    out << line;
  }
}

void write_embeddings_binary(const Corpus& corpus, std::ostream& out) {
  out.write(kBinaryMagic, 4);
  put_u32(out, kBinaryVersion);
  put_u32(out, static_cast<std::uint32_t>(corpus.dimension()));
  put_u64(out, corpus.size());
  for (const auto& u : corpus.utterances()) {
    put_label(out, u.id, "utterance id");
    put_label(out, u.true_speaker.value_or(""), "speaker label");
    put_f32(out, u.duration_seconds ? static_cast<float>(*u.duration_seconds)
                                    : std::numeric_limits<float>::quiet_NaN());
    for (double x : u.embedding) put_f32(out, static_cast<float>(x));
  }
}

void save_embeddings(const Corpus& corpus, const fs::path& path, EmbeddingFormat format) {
  const bool binary = format == EmbeddingFormat::kBinary;
  AtomicFile file(path, binary);
  if (binary) {
    write_embeddings_binary(corpus, file.stream());
  } else {
    write_embeddings_text(corpus, file.stream());
  }
  file.commit();
}

void write_assignments(const ClusteringResult& result, const Corpus& corpus, std::ostream& out,
                       std::span<const char> excess) {
  if (!excess.empty() && excess.size() != corpus.size()) {
    throw std::invalid_argument("excess flags must cover the whole corpus");
  }
  const auto labels = result.labels(corpus.size());
  out << "id\tcluster\texcess\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out << corpus[i].id << '\t' << labels[i] << '\t';
    if (!excess.empty()) out << (excess[i] ? '1' : '0');
    out << '\n';
  }
}

void save_assignments(const ClusteringResult& result, const Corpus& corpus,
                      const fs::path& path, std::span<const char> excess) {
  AtomicFile file(path);
  write_assignments(result, corpus, file.stream(), excess);
  file.commit();
}

std::vector<AssignmentRow> load_assignments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open assignments file '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != "id\tcluster\texcess") {
    throw DataError(fmt::format("{}: missing assignments header", path.string()));
  }
  std::vector<AssignmentRow> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 3) throw DataError(fmt::format("{}: row {}: expected 3 fields", path.string(), row));
    AssignmentRow r;
    r.id = std::string(f[0]);
    const auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), r.cluster);
    if (ec != std::errc() || ptr != f[1].data() + f[1].size() || r.cluster < kNoiseLabel) {
      throw DataError(fmt::format("{}: row {}: bad cluster id '{}'", path.string(), row, f[1]));
    }
    if (f[2] == "1") {
      r.excess = true;
    } else if (f[2] == "0") {
      r.excess = false;
    } else if (!f[2].empty()) {
      throw DataError(fmt::format("{}: row {}: bad excess flag '{}'", path.string(), row, f[2]));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

ClusteringResult result_from_assignments(const Corpus& corpus,
                                         std::span<const AssignmentRow> rows) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus[i].id, i);
  std::vector<char> seen(corpus.size(), 0);
  std::map<ClusterId, std::vector<std::size_t>> groups;
  ClusteringResult result;
  for (const auto& r : rows) {
    const auto it = index.find(r.id);
    if (it == index.end()) throw DataError(fmt::format("assignment for unknown id '{}'", r.id));
    if (seen[it->second]) throw DataError(fmt::format("id '{}' assigned twice", r.id));
    seen[it->second] = 1;
    if (r.cluster == kNoiseLabel) {
      result.noise.push_back(it->second);
    } else {
      groups[r.cluster].push_back(it->second);
    }
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!seen[i]) throw DataError(fmt::format("no assignment for id '{}'", corpus[i].id));
  }
  for (auto& [id, members] : groups) {
    result.clusters.push_back(make_cluster(corpus, id, std::move(members)));
  }
  std::sort(result.noise.begin(), result.noise.end());
  return result;
}

void write_stage_log(std::span<const StageRecord> log, std::ostream& out) {
  out << "stage\tclusters_before\tclusters_after\tnoise\n";
  for (const auto& s : log) {
    out << s.stage << '\t' << s.clusters_before << '\t' << s.clusters_after << '\t'
        << s.noise_count << '\n';
  }
}

void save_stage_log(std::span<const StageRecord> log, const fs::path& path) {
  AtomicFile file(path);
  write_stage_log(log, file.stream());
  file.commit();
}

namespace {

std::string percent(double fraction) { return fmt::format("{:.2f}", 100.0 * fraction); }

}  // namespace

std::string format_report(const EvaluationReport& r) {
  std::string s = "metric\tvalue\n";
  s += fmt::format("num_clusters_identified\t{}\n", r.num_clusters_after_filter);
  s += fmt::format("average_cluster_purity_percent\t{}\n", percent(r.average_purity));
  s += fmt::format("num_speakers_present_in_only_one_cluster\t{}\n",
                   r.speakers_with_one_dominant_cluster);
  s += fmt::format("cluster_uniqueness_percent\t{}\n", percent(r.cluster_uniqueness));
  s += fmt::format("utterances_classified_as_noise_percent\t{}\n", percent(r.noise_fraction));
  s += fmt::format("data_coverage_percent\t{}\n", percent(r.coverage));
  return s;
}

void save_report(const EvaluationReport& report, const fs::path& path) {
  AtomicFile file(path);
  file.stream() << format_report(report);
  file.commit();
}

EvaluationReport parse_report(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "metric\tvalue") throw DataError("missing report header");
  EvaluationReport r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 2) throw DataError(fmt::format("bad report line '{}'", line));
    const auto v = parse_double(f[1]);
    if (!v) throw DataError(fmt::format("bad report value '{}'", f[1]));
    if (f[0] == "num_clusters_identified") {
      r.num_clusters_after_filter = static_cast<std::size_t>(*v);
    } else if (f[0] == "average_cluster_purity_percent") {
      r.average_purity = *v / 100.0;
    } else if (f[0] == "num_speakers_present_in_only_one_cluster") {
      r.speakers_with_one_dominant_cluster = static_cast<std::size_t>(*v);
    } else if (f[0] == "cluster_uniqueness_percent") {
      r.cluster_uniqueness = *v / 100.0;
    } else if (f[0] == "utterances_classified_as_noise_percent") {
      r.noise_fraction = *v / 100.0;
    } else if (f[0] == "data_coverage_percent") {
      r.coverage = *v / 100.0;
    } else {
      throw DataError(fmt::format("unknown report field '{}'", f[0]));
    }
  }
  return r;
}

EvaluationReport load_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open report '{}'", path.string()));
  return parse_report(in);
}

void save_similarity_report(const SimilarityReport& r, const fs::path& path) {
  AtomicFile file(path);
  auto& out = file.stream();
  out << fmt::format("# same_pairs={} same_mean={:.6f} same_std={:.6f}\n", r.same.count,
                     r.same.mean, r.same.stddev);
  out << fmt::format("# different_pairs={} different_mean={:.6f} different_std={:.6f}\n",
                     r.different.count, r.different.mean, r.different.stddev);
  out << fmt::format("# overlap={:.6f}\n", r.overlap);
  out << "bin_lo\tbin_hi\tsame\tdifferent\n";
  for (std::size_t b = 0; b < r.same_counts.size(); ++b) {
    out << fmt::format("{:.4f}\t{:.4f}\t{}\t{}\n", r.bin_edges[b], r.bin_edges[b + 1],
                       r.same_counts[b], r.different_counts[b]);
  }
  file.commit();
}

}  // namespace spkclust::io
