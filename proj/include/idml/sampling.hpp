#pragma once

// Negative mining for triplet and margin losses.

#include "idml/core.hpp"

#include <optional>
#include <vector>

namespace idml {

struct TripletIndex {
  Index anchor = 0;
  Index positive = 0;
  Index negative = 0;
};

/// Throws ShapeError unless `dists` is square, symmetric and zero on the diagonal.
void validate_distance_table(const Matrix& dists, Index expected_n);

/// Closest negative that is still farther from the anchor than the positive.
/// Ties resolve to the lower index. Returns nullopt when no negative qualifies.
std::optional<Index> semi_hard_negative(Index anchor, Index positive, const Matrix& dists,
                                        const std::vector<LabelSet>& labels);

/// log of the distance-weighted sampling weight
///   min(phi, d^(2-n) (1 - d^2/4)^((3-n)/2))
/// evaluated in the log domain. d is clamped to [1e-4, 2 - 1e-4].
double dw_log_weight(double d, Index n_dim, double phi);

struct DwDraw {
  Index index = -1;
  // Distance of the uniform draw from the nearest CDF boundary; a tiny value
  // means a small change in the distances could flip the choice.
  double boundary_margin = 1.0;
};

/// Draws one negative for `anchor` with probability proportional to
/// exp(dw_log_weight(D(anchor, n))), normalized over the anchor's negatives.
DwDraw sample_negative_dw_draw(Index anchor, const Matrix& dists, const std::vector<LabelSet>& labels,
                               Index n_dim, double phi, Rng& rng);

inline Index sample_negatives_dw(Index anchor, const Matrix& dists, const std::vector<LabelSet>& labels,
                                 Index n_dim, double phi, Rng& rng) {
  return sample_negative_dw_draw(anchor, dists, labels, n_dim, phi, rng).index;
}

/// Normalized sampling probabilities over all indices (zero for non-negatives).
Vector dw_probabilities(Index anchor, const Matrix& dists, const std::vector<LabelSet>& labels, Index n_dim,
                        double phi);

namespace detail {
std::optional<Index> semi_hard_unchecked(Index anchor, Index positive, const Matrix& dists,
                                         const std::vector<LabelSet>& labels, double* margin = nullptr);
}

}  // namespace idml
