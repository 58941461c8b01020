#include "idml/sampling.hpp"

#include <cmath>
#include <limits>

namespace idml {

namespace {
constexpr double kDistMin = 1e-4;
}

void validate_distance_table(const Matrix& dists, Index expected_n) {
  if (dists.rows() != dists.cols()) throw ShapeError("distance table is not square");
  if (dists.rows() != expected_n) throw ShapeError("distance table does not match label count");
  for (Index i = 0; i < dists.rows(); ++i) {
    if (dists(i, i) != 0.0) throw ShapeError("distance table has nonzero diagonal");
    for (Index j = i + 1; j < dists.cols(); ++j) {
      if (dists(i, j) != dists(j, i)) throw ShapeError("distance table is not symmetric");
    }
  }
}

namespace detail {

std::optional<Index> semi_hard_unchecked(Index anchor, Index positive, const Matrix& dists,
                                         const std::vector<LabelSet>& labels, double* margin) {
  const double dap = dists(anchor, positive);
  const auto& la = labels[static_cast<std::size_t>(anchor)];
  std::optional<Index> best;
  double best_d = std::numeric_limits<double>::infinity();
  double second_d = std::numeric_limits<double>::infinity();
  double closest_gap = std::numeric_limits<double>::infinity();
  for (Index n = 0; n < dists.rows(); ++n) {
    if (n == anchor || labels_match(la, labels[static_cast<std::size_t>(n)])) continue;
    const double d = dists(anchor, n);
    closest_gap = std::min(closest_gap, std::abs(d - dap));
    if (d <= dap) continue;
    if (d < best_d) {
      second_d = best_d;
      best_d = d;
      best = n;
    } else if (d < second_d) {
      second_d = d;
    }
  }
  if (margin) *margin = std::min(closest_gap, second_d - best_d);
  return best;
}

}  // namespace detail

std::optional<Index> semi_hard_negative(Index anchor, Index positive, const Matrix& dists,
                                        const std::vector<LabelSet>& labels) {
  validate_distance_table(dists, static_cast<Index>(labels.size()));
  if (anchor < 0 || anchor >= dists.rows() || positive < 0 || positive >= dists.rows()) {
    throw ShapeError("semi_hard_negative: index out of range");
  }
  return detail::semi_hard_unchecked(anchor, positive, dists, labels);
}

double dw_log_weight(double d, Index n_dim, double phi) {
  if (n_dim <= 0) throw ParameterError("dw_log_weight: n_dim must be positive");
  if (!(phi > 0.0)) throw ParameterError("dw_log_weight: phi must be positive");
  d = std::clamp(d, kDistMin, 2.0 - kDistMin);
  const double n = static_cast<double>(n_dim);
  const double log_density_inv = (2.0 - n) * std::log(d) + 0.5 * (3.0 - n) * std::log1p(-0.25 * d * d);
  return std::min(std::log(phi), log_density_inv);
}

Vector dw_probabilities(Index anchor, const Matrix& dists, const std::vector<LabelSet>& labels, Index n_dim,
                        double phi) {
  const Index n = dists.rows();
  const auto& la = labels[static_cast<std::size_t>(anchor)];
  Vector logw = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  double max_logw = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < n; ++j) {
    if (j == anchor || labels_match(la, labels[static_cast<std::size_t>(j)])) continue;
    logw(j) = dw_log_weight(dists(anchor, j), n_dim, phi);
    max_logw = std::max(max_logw, logw(j));
  }
  if (!std::isfinite(max_logw)) throw MiningExhaustedError("no negatives for anchor");
  Vector p = (logw.array() - max_logw).exp().matrix();
  return p / p.sum();
}

DwDraw sample_negative_dw_draw(Index anchor, const Matrix& dists, const std::vector<LabelSet>& labels,
                               Index n_dim, double phi, Rng& rng) {
  if (dists.rows() != dists.cols() || dists.rows() != static_cast<Index>(labels.size())) {
    throw ShapeError("sample_negatives_dw: malformed distance table");
  }
  const Vector p = dw_probabilities(anchor, dists, labels, n_dim, phi);
  const double u = rng.next_double();
  Index last_candidate = -1;
  for (Index j = 0; j < p.size(); ++j) {
    if (p(j) > 0.0) last_candidate = j;
  }
  DwDraw draw;
  draw.boundary_margin = std::numeric_limits<double>::infinity();
  double cum = 0.0;
  bool first = true;
  for (Index j = 0; j < p.size(); ++j) {
    if (p(j) <= 0.0) continue;
    const double lo = cum;
    cum += p(j);
    if (draw.index < 0 && (u < cum || j == last_candidate)) {
      draw.index = j;
      // Only interior CDF boundaries can flip the choice.
      if (!first) draw.boundary_margin = std::min(draw.boundary_margin, u - lo);
      if (j != last_candidate) draw.boundary_margin = std::min(draw.boundary_margin, cum - u);
    }
    first = false;
  }
  return draw;
}

}  // namespace idml
