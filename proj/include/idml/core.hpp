#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace idml {

using Scalar = double;

template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
// One sample per row.
template <typename T>
using RowMatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorX<Scalar>;
using Matrix = MatrixX<Scalar>;
using RowMatrix = RowMatrixX<Scalar>;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class FinitenessError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class MiningExhaustedError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& v, const char* what = "vector") {
  if (!v.allFinite()) throw FinitenessError(std::string(what) + " has non-finite entries");
}

inline void require_same_dim(Index a, Index b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

/// Euclidean norm; rejects NaN/Inf.
template <typename Derived>
typename Derived::Scalar l2_norm(const Eigen::MatrixBase<Derived>& v) {
  require_finite(v);
  return v.norm();
}

// ---------------------------------------------------------------------------
// Labels

/// Set of class identifiers. Clean samples carry one label, mixed samples two.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<int> ids) : ids_(ids) { validate(); }
  explicit LabelSet(std::set<int> ids) : ids_(std::move(ids)) { validate(); }
  static LabelSet single(int id) { return LabelSet{id}; }

  const std::set<int>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  int primary() const { return *ids_.begin(); }
  bool contains(int id) const { return ids_.count(id) != 0; }

  LabelSet united(const LabelSet& other) const {
    std::set<int> out = ids_;
    out.insert(other.ids_.begin(), other.ids_.end());
    return LabelSet(std::move(out));
  }

  /// "a|b|c"
  std::string to_string() const;
  static LabelSet parse(const std::string& text);

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  void validate() const {
    if (ids_.empty()) throw ParameterError("LabelSet must be nonempty");
    if (*ids_.begin() < 0) throw ParameterError("LabelSet identifiers must be nonnegative");
  }
  std::set<int> ids_;
};

/// Two label sets match iff they share at least one class. Reflexive and
/// symmetric, not transitive.
bool labels_match(const LabelSet& a, const LabelSet& b);

// ---------------------------------------------------------------------------
// Embeddings

/// Encoder output for one sample: semantic part s and uncertainty part u.
struct EmbeddingPair {
  Vector semantic;
  Vector uncertainty;
};

// ---------------------------------------------------------------------------
// Batches

struct Sample {
  Vector feature;
  LabelSet labels;
  bool is_mixed = false;
};

struct Batch {
  std::vector<Sample> samples;

  Index size() const { return static_cast<Index>(samples.size()); }
  Index dim() const { return samples.empty() ? 0 : samples.front().feature.size(); }

  /// Throws if empty or ragged.
  void validate() const;
  RowMatrix features() const;
  std::vector<LabelSet> labels() const;
};

// ---------------------------------------------------------------------------
// Randomness

/// Counter-based generator: output k is a bijective mix of (seed, k), so
/// streams are identical on every platform and substreams are cheap.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double next_double();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double gamma(double shape);
  double beta(double a, double b);

  /// Independent stream derived from this generator's seed and `key`.
  Rng substream(std::uint64_t key) const;

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

  /// k distinct indices from [0, n), uniformly, in draw order.
  std::vector<Index> sample_without_replacement(Index n, Index k);

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Threads

/// Worker cap from IDML_THREADS (default 1).
unsigned thread_budget();

/// Runs body(i) for i in [0, n) over up to thread_budget() workers. Each index
/// must write disjoint state so results do not depend on scheduling.
template <typename Body>
void parallel_for(Index n, Body&& body);

}  // namespace idml

#include "idml/detail/parallel.hpp"
