#include "idml/core.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>

namespace idml {

std::string LabelSet::to_string() const {
  std::string out;
  for (int id : ids_) {
    if (!out.empty()) out += '|';
    out += std::to_string(id);
  }
  return out;
}

LabelSet LabelSet::parse(const std::string& text) {
  std::set<int> ids;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, '|')) {
    std::size_t used = 0;
    int id = 0;
    try {
      id = std::stoi(tok, &used);
    } catch (const std::exception&) {
      throw FormatError("bad label '" + tok + "'");
    }
    if (used != tok.size()) throw FormatError("bad label '" + tok + "'");
    if (id < 0) throw FormatError("negative label '" + tok + "'");
    ids.insert(id);
  }
  if (ids.empty()) throw FormatError("empty label field");
  return LabelSet(std::move(ids));
}

bool labels_match(const LabelSet& a, const LabelSet& b) {
  // Both sets are ordered; walk them together.
  auto ia = a.ids().begin();
  auto ib = b.ids().begin();
  while (ia != a.ids().end() && ib != b.ids().end()) {
    if (*ia == *ib) return true;
    if (*ia < *ib) {
      ++ia;
    } else {
      ++ib;
    }
  }
  return false;
}

void Batch::validate() const {
  if (samples.empty()) throw ParameterError("batch is empty");
  const Index d = dim();
  for (const auto& s : samples) {
    require_same_dim(s.feature.size(), d, "batch feature");
    require_finite(s.feature, "batch feature");
  }
}

RowMatrix Batch::features() const {
  validate();
  RowMatrix x(size(), dim());
  for (Index i = 0; i < size(); ++i) x.row(i) = samples[static_cast<std::size_t>(i)].feature.transpose();
  return x;
}

std::vector<LabelSet> Batch::labels() const {
  std::vector<LabelSet> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.labels);
  return out;
}

namespace {

// SplitMix64 finalizer; a bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::uint64_t Rng::next_u64() {
  const std::uint64_t k = counter_++;
  return mix64(mix64(seed_ ^ 0x5851f42d4c957f2dULL) + (k + 1) * kGolden);
}

double Rng::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi)) throw ParameterError("uniform: require lo < hi");
  const double v = lo + (hi - lo) * next_double();
  return v < hi ? v : std::nextafter(hi, lo);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ParameterError("below: n must be positive");
  // Rejection keeps the result unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  for (;;) {
    const std::uint64_t v = next_u64();
    if (v < limit) return v % n;
  }
}

double Rng::normal() {
  // Box-Muller with the cosine branch only, so each call consumes two words.
  double u1 = next_double();
  while (u1 <= 0.0) u1 = next_double();
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw ParameterError("gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and rescale.
    const double g = gamma(shape + 1.0);
    double u = next_double();
    while (u <= 0.0) u = next_double();
    return g * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = next_double();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

Rng Rng::substream(std::uint64_t key) const { return Rng(mix64(seed_ + mix64(key + kGolden))); }

std::vector<Index> Rng::sample_without_replacement(Index n, Index k) {
  if (k > n || k < 0) throw ParameterError("sample_without_replacement: k out of range");
  std::vector<Index> pool(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  // Partial Fisher-Yates.
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

unsigned thread_budget() {
  if (const char* env = std::getenv("IDML_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

}  // namespace idml
