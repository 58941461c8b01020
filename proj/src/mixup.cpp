#include "idml/mixup.hpp"

#include <cmath>

namespace idml {

void AugmentConfig::validate() const {
  for (double p : {mix_fraction, blur_prob, occl_prob, occl_fraction, lowres_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("augmentation probabilities and fractions must be in [0, 1]");
  }
  if (lowres_factor < 1) throw ParameterError("lowres_factor must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ParameterError("noise_sigma must be >= 0");
  if (!(mix_beta_a > 0.0)) throw ParameterError("mix_beta_a must be > 0");
}

Sample mix(const Vector& x1, const LabelSet& l1, const Vector& x2, const LabelSet& l2, double lambda) {
  require_same_dim(x1.size(), x2.size(), "mix");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("mix: lambda outside [0, 1]");
  return {lambda * x1 + (1.0 - lambda) * x2, l1.united(l2), true};
}

Vector occlude(const Vector& x, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ParameterError("occlude: fraction outside [0, 1]");
  const auto count = static_cast<Index>(std::ceil(fraction * static_cast<double>(x.size()) - 1e-12));
  Vector out = x;
  for (Index k : rng.sample_without_replacement(x.size(), std::min(count, x.size()))) out(k) = 0.0;
  return out;
}

Vector blur(const Vector& x, double noise_sigma, Rng& rng) {
  if (!(noise_sigma >= 0.0)) throw ParameterError("blur: sigma must be >= 0");
  Vector out = x;
  if (noise_sigma == 0.0) return out;
  for (Index k = 0; k < out.size(); ++k) out(k) += noise_sigma * rng.normal();
  return out;
}

Vector lowres(const Vector& x, int factor) {
  if (factor < 1) throw ParameterError("lowres: factor must be >= 1");
  Vector out(x.size());
  for (Index start = 0; start < x.size(); start += factor) {
    const Index len = std::min<Index>(factor, x.size() - start);
    const double padded = x.segment(start, len).sum() + static_cast<double>(factor - len) * x(start + len - 1);
    out.segment(start, len).setConstant(padded / factor);
  }
  return out;
}

Batch augment_batch(const Batch& batch, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  batch.validate();
  Batch out = batch;
  for (auto& s : out.samples) {
    if (cfg.lowres_prob > 0.0 && rng.next_double() < cfg.lowres_prob) s.feature = lowres(s.feature, cfg.lowres_factor);
    if (cfg.blur_prob > 0.0 && rng.next_double() < cfg.blur_prob) s.feature = blur(s.feature, cfg.noise_sigma, rng);
    if (cfg.occl_prob > 0.0 && rng.next_double() < cfg.occl_prob) s.feature = occlude(s.feature, cfg.occl_fraction, rng);
  }

  const auto n = static_cast<std::uint64_t>(batch.samples.size());
  const auto n_mix = static_cast<Index>(std::llround(cfg.mix_fraction * static_cast<double>(n)));
  if (n < 2 || n_mix == 0) return out;

  bool any_distinct = false;
  for (std::size_t i = 1; i < batch.samples.size() && !any_distinct; ++i) {
    any_distinct = !(batch.samples[i].labels == batch.samples[0].labels);
  }
  for (Index m = 0; m < n_mix; ++m) {
    std::uint64_t i = rng.below(n);
    std::uint64_t j = rng.below(n - 1);
    if (j >= i) ++j;
    // Different labels exist, so redraw the partner until one is found.
    while (any_distinct && batch.samples[i].labels == batch.samples[j].labels) {
      i = rng.below(n);
      j = rng.below(n - 1);
      if (j >= i) ++j;
    }
    const double lambda = rng.beta(cfg.mix_beta_a, cfg.mix_beta_a);
    const auto& a = batch.samples[i];
    const auto& b = batch.samples[j];
    out.samples.push_back(mix(a.feature, a.labels, b.feature, b.labels, lambda));
  }
  return out;
}

}  // namespace idml
