#pragma once

// Synthetic datasets with controllable ambiguity, plus CSV and binary I/O.

#include "idml/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace idml {

struct SynthConfig {
  int n_classes = 10;
  int per_class = 50;
  int input_dim = 16;
  int signal_dim = 8;          // class means span a random subspace of this size
  double class_sep = 4.0;      // distance between class means (exact when orthogonal)
  double within_sigma = 1.0;   // noise inside the signal subspace
  double nuisance_sigma = 1.0; // noise in the remaining input directions
  double ambiguous_frac = 0.0;
  double mislabel_frac = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Train/test partition of row indices. Classes are sorted and the first half
/// goes to train. Rows whose labels straddle both halves are left out.
struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
  std::vector<int> train_classes;
  std::vector<int> test_classes;
};

struct Dataset {
  std::vector<std::int64_t> ids;
  RowMatrix features;
  std::vector<LabelSet> labels;
  /// Generator metadata: row was placed between two class means. Empty for
  /// loaded datasets.
  std::vector<bool> ambiguous;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  void validate() const;

  /// Sorted distinct class identifiers.
  std::vector<int> classes() const;
  Split split() const;
  Dataset subset(const std::vector<Index>& rows) const;
  Batch batch(const std::vector<Index>& rows) const;

  /// Ids, features and labels; generator metadata is ignored.
  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.ids == b.ids && a.features == b.features && a.labels == b.labels;
  }
};

/// Random orthonormal basis of the signal subspace, one direction per row.
RowMatrix signal_basis(const SynthConfig& cfg);

/// Class means on scaled random unit directions inside the signal subspace
/// (orthonormal when there are no more classes than signal dimensions).
RowMatrix class_means(const SynthConfig& cfg);

/// Class-major rows. Ambiguous rows sit near the midpoint of their class
/// mean and another class from the same split half; mislabelled rows take a
/// different label from the same half, so splits stay class-disjoint.
Dataset generate(const SynthConfig& cfg);

/// Header "id,label,f0,...,f{D-1}"; labels may be "|"-joined.
void save_csv(const Dataset& ds, const std::string& path);
Dataset load_csv(const std::string& path);
Dataset parse_csv(const std::string& text);
std::string format_csv(const Dataset& ds);

/// Little-endian: char[4] "IDMD", u32 version (1), u32 rows, u32 dim,
/// then per row i64 id, u32 n_labels, i32 labels[n_labels]; then f64
/// features row-major.
void save_binary(const Dataset& ds, const std::string& path);
Dataset load_binary(const std::string& path);

/// Dispatches on the file's magic bytes.
Dataset load_dataset(const std::string& path);

}  // namespace idml
