#pragma once

// Virtual-sample synthesis with set-valued labels, plus feature-space
// analogues of the blur / occlusion / low-resolution augmentations.

#include "idml/core.hpp"

namespace idml {

struct AugmentConfig {
  double mix_beta_a = 1.0;     // lambda ~ Beta(a, a)
  double mix_fraction = 0.5;   // mixed samples added per batch, relative to its size
  double blur_prob = 0.0;
  double occl_prob = 0.0;
  double occl_fraction = 0.25;
  int lowres_factor = 1;
  double lowres_prob = 0.0;
  double noise_sigma = 0.1;

  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
  void validate() const;
};

/// lambda x1 + (1 - lambda) x2 labelled with l1 | l2.
Sample mix(const Vector& x1, const LabelSet& l1, const Vector& x2, const LabelSet& l2, double lambda);

/// Zeroes ceil(fraction * dim) distinct coordinates.
Vector occlude(const Vector& x, double fraction, Rng& rng);

/// Adds i.i.d. N(0, sigma^2) noise.
Vector blur(const Vector& x, double noise_sigma, Rng& rng);

/// Replaces each contiguous block of `factor` coordinates with its mean. A
/// short trailing block is padded by repeating its last entry.
Vector lowres(const Vector& x, int factor);

/// Applies the per-sample augmentations to the clean samples, then appends
/// round(mix_fraction * N) mixed samples built from random pairs. Pairs with
/// different labels are preferred when the batch has any.
Batch augment_batch(const Batch& batch, const AugmentConfig& cfg, Rng& rng);

}  // namespace idml
