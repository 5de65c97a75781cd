#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blufs/common.hpp"

namespace blufs {

/// A dataset holds the feature matrix in d x n orientation: one row per
/// feature, one column per sample. Immutable by convention once built;
/// operations return fresh copies.
struct Dataset {
  Eigen::MatrixXd features;                              // d x n
  std::optional<std::vector<int>> labels;                // length n, in [0, c)
  std::optional<int> class_count;                        // c
  std::optional<std::vector<std::string>> feature_names; // length d

  Eigen::Index dim() const { return features.rows(); }
  Eigen::Index size() const { return features.cols(); }

  /// Throws if any structural invariant is broken (NaN/Inf entries,
  /// n < 2, label out of range, mismatched auxiliary lengths).
  void validate() const;
};

enum class SyntheticKind { TwoRings, TwoBananas, GaussianBlobs };

const char* to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(const std::string& name);

/// Two informative coordinates carrying the 2-D class structure plus
/// `noise_features` i.i.d. Gaussian columns.
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::TwoRings;
  int samples_per_class = 200;
  int noise_features = 7;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Loads a CSV dataset (header row, one sample per row, optional `label`
/// column of nonnegative integers). Features are transposed into d x n.
Dataset load_dataset(const std::string& path);

/// Writes the dataset back out in the same CSV layout, full precision.
void save_dataset(const Dataset& ds, const std::string& path);

/// Deterministic under spec.seed; features 0 and 1 are informative,
/// the rest pure noise. Labels are the generating class (c = 2).
Dataset gen_synthetic(const SyntheticSpec& spec);

/// Per-feature z-score: every row mean 0; rows with nonzero variance get
/// unit (population) variance; constant rows become all-zero.
Dataset standardize(const Dataset& ds);

/// Per-feature min-max rescale into [0, 1]; constant rows become all-zero.
/// This is the default preprocessing of the pipeline (z-scoring forces
/// every noise feature to unit variance, which destroys the contrast the
/// similarity graph needs).
Dataset rescale_unit(const Dataset& ds);

/// Disjoint train/test partition, stratified by class when every class has
/// at least 2 members (unstratified fallback otherwise). Train size is
/// round(train_fraction * n). Requires labels.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed);

/// Column subset (samples) keeping labels/names; indices must be valid.
Dataset take_samples(const Dataset& ds, const std::vector<Eigen::Index>& idx);

}  // namespace blufs
