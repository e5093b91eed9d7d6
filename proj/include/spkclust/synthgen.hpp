#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spkclust/core.hpp"

namespace spkclust {

struct SynthSpec {
  std::size_t num_speakers = 80;
  /// Either one count per speaker, or a single count used for all speakers.
  std::vector<std::size_t> utterances_per_speaker{150};
  std::size_t dimension = 256;
  /// Norm of the isotropic perturbation added to the speaker direction
  /// before renormalizing; same-speaker similarity is about 1 / (1 + s^2).
  double angular_spread = 0.5;
  /// Log-scale standard deviation of a per-utterance multiplier on the
  /// perturbation norm (0 = every utterance equally noisy).
  double spread_variation = 0.25;
  std::uint64_t seed = 0;
  double duration_mean_seconds = 6.0;
  /// Fraction of speakers placed in confusable pairs.
  double confusable_fraction = 0.0;
  /// Cosine similarity between the directions of a confusable pair.
  double confusable_similarity = 0.9;
  /// Shuffle utterance order; otherwise speakers appear in blocks.
  bool shuffle = true;

  void validate() const;
};

/// Labeled synthetic corpus. Speaker labels are "spk000", "spk001", ...;
/// confusable pairs are speakers (0,1), (2,3), ... up to the requested fraction.
Corpus generate(const SynthSpec& spec);

/// Unit speaker directions as generated for `spec` (same RNG stream as generate()).
std::vector<Embedding> speaker_directions(const SynthSpec& spec);

}  // namespace spkclust
