#include "spkclust/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "spkclust/geometry.hpp"

namespace spkclust {

void SynthSpec::validate() const {
  if (num_speakers < 1) throw std::invalid_argument("num_speakers must be >= 1");
  if (dimension < 2) throw std::invalid_argument("dimension must be >= 2");
  if (utterances_per_speaker.size() != 1 && utterances_per_speaker.size() != num_speakers) {
    throw std::invalid_argument("utterances_per_speaker needs 1 or num_speakers entries");
  }
  if (std::any_of(utterances_per_speaker.begin(), utterances_per_speaker.end(),
                  [](std::size_t c) { return c == 0; })) {
    throw std::invalid_argument("every speaker needs at least one utterance");
  }
  if (!(angular_spread > 0.0)) throw std::invalid_argument("angular_spread must be positive");
  if (!(spread_variation >= 0.0)) throw std::invalid_argument("spread_variation must be >= 0");
  if (!(duration_mean_seconds > 0.0)) throw std::invalid_argument("duration mean must be positive");
  if (!(confusable_fraction >= 0.0 && confusable_fraction <= 1.0)) {
    throw std::invalid_argument("confusable_fraction must be in [0, 1]");
  }
  if (!(confusable_similarity > -1.0 && confusable_similarity < 1.0)) {
    throw std::invalid_argument("confusable_similarity must be in (-1, 1)");
  }
}

namespace {

Embedding random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal;
  Embedding v(dim);
  for (;;) {
    for (auto& x : v) x = normal(rng);
    const double n = l2_norm(v);
    if (n > 1e-9) {
      for (auto& x : v) x /= n;
      return v;
    }
  }
}

std::vector<Embedding> directions(const SynthSpec& spec, std::mt19937_64& rng) {
  std::vector<Embedding> dirs;
  dirs.reserve(spec.num_speakers);
  for (std::size_t s = 0; s < spec.num_speakers; ++s) dirs.push_back(random_unit(rng, spec.dimension));

  const auto confusable = static_cast<std::size_t>(
      std::llround(spec.confusable_fraction * static_cast<double>(spec.num_speakers)));
  const double s = spec.confusable_similarity;
  for (std::size_t a = 0; a + 1 < confusable; a += 2) {
    // Second direction = s * first + sqrt(1 - s^2) * (unit vector orthogonal to first).
    const Embedding& u = dirs[a];
    Embedding w = dirs[a + 1];
    const double proj = dot(u, w);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= proj * u[k];
    const double wn = l2_norm(w);
    for (auto& x : w) x /= wn;
    const double c = std::sqrt(1.0 - s * s);
    for (std::size_t k = 0; k < w.size(); ++k) dirs[a + 1][k] = s * u[k] + c * w[k];
  }
  return dirs;
}

}  // namespace

std::vector<Embedding> speaker_directions(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  return directions(spec, rng);
}

Corpus generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto dirs = directions(spec, rng);

  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> duration_jitter(0.5, 1.5);
  const double noise_scale = spec.angular_spread / std::sqrt(static_cast<double>(spec.dimension));

  std::vector<Utterance> utterances;
  for (std::size_t s = 0; s < spec.num_speakers; ++s) {
    const std::size_t count = spec.utterances_per_speaker.size() == 1
                                  ? spec.utterances_per_speaker[0]
                                  : spec.utterances_per_speaker[s];
    for (std::size_t k = 0; k < count; ++k) {
      Utterance u;
      u.id = fmt::format("spk{:03}-utt{:04}", s, k);
      u.true_speaker = fmt::format("spk{:03}", s);
      u.embedding = dirs[s];
      const double scale =
          spec.spread_variation > 0.0 ? noise_scale * std::exp(spec.spread_variation * normal(rng))
                                      : noise_scale;
      for (auto& x : u.embedding) x += scale * normal(rng);
      const double n = l2_norm(u.embedding);
      for (auto& x : u.embedding) x /= n;
      u.duration_seconds = spec.duration_mean_seconds * duration_jitter(rng);
      utterances.push_back(std::move(u));
    }
  }
  if (spec.shuffle) std::shuffle(utterances.begin(), utterances.end(), rng);
  return Corpus(std::move(utterances), spec.dimension);
}

}  // namespace spkclust
