#pragma once

// Labeled feature datasets: synthetic generation, CSV/binary ingestion and
// balanced N-classes x m-instances batch sampling.

#include "gcahng/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gcahng {

/// Immutable set of samples. Row r of `features` carries class `labels[r]`
/// where labels are 1-based class ids in {1..num_classes}.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  /// Row indices per class; element c-1 lists class c.
  std::vector<std::vector<Index>> rows_by_class() const;
  /// Subset by row index, keeping num_classes.
  Dataset subset(const std::vector<Index>& rows) const;
};

struct SyntheticDatasetSpec {
  int num_classes = 8;
  int samples_per_class = 50;
  int input_dim = 64;
  double class_center_scale = 3.0;
  double within_class_stddev = 0.5;
  double overlap_factor = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Class centers on a sphere of radius class_center_scale, contracted toward
/// their centroid by overlap_factor; samples are isotropic Gaussians around
/// them. Class-major row order.
Dataset make_synthetic(const SyntheticDatasetSpec& spec);

/// Centers only (same draws as make_synthetic), one row per class.
Matrix synthetic_centers(const SyntheticDatasetSpec& spec);

enum class FeatureFormat { csv, binary };

/// Picks the format from the extension (".csv" or anything else -> binary).
FeatureFormat format_from_path(const std::filesystem::path& path);

Dataset load_features(const std::filesystem::path& path, FeatureFormat format);
void save_features(const Dataset& data, const std::filesystem::path& path, FeatureFormat format);

/// Batch of B = N x m samples; row i + g*N carries the same class for every
/// group g in 0..m-1.
struct LabeledBatch {
  Matrix x;
  std::vector<int> labels;
  std::vector<Index> indices;  // dataset rows
  int classes_per_batch = 0;   // N
  int instances_per_class = 0;  // m

  Index size() const { return x.rows(); }
};

LabeledBatch sample_balanced(const Dataset& data, int classes_per_batch,
                             int instances_per_class, Rng& rng);

/// Checks the group layout invariant; returns false on any violation.
bool has_group_layout(std::span<const int> labels, int classes_per_batch,
                      int instances_per_class);

/// Per-class holdout: the last `fraction` of each class's (shuffled) rows go
/// to the second set. Both sets keep at least one sample per class.
std::pair<Dataset, Dataset> split_per_class(const Dataset& data, double fraction, Rng& rng);

}  // namespace gcahng
