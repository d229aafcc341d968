#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "onion/sparse_batch.hpp"
#include "onion/tensor.hpp"

namespace onion {

struct RocPoint {
  double threshold = 0.0;  // examples with score >= threshold are accepted
  double tpr = 0.0;
  double fpr = 0.0;
};

// Points ordered by descending threshold, starting at (+inf, 0, 0) and ending
// at the lowest score where tpr = fpr = 1. Tied scores form one point.
// Throws std::invalid_argument unless both classes are present.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> positive);

// Largest-threshold point whose tpr reaches target_tpr (in (0, 1]).
RocPoint pick_threshold(std::span<const RocPoint> roc, double target_tpr);

struct ThresholdEntry {
  double threshold = 0.0;
  double target_tpr = 0.0;
  double achieved_tpr = 0.0;
  double achieved_fpr = 0.0;
};

// Thresholds for the S1 classes of user interest, keyed by S1 class id.
struct ThresholdSet {
  std::map<int, ThresholdEntry> entries;

  void write(std::ostream& os) const;
  static ThresholdSet read(std::istream& is);
};

// Calibrates one threshold per class in `targets` from S1 probabilities
// (N x K, one row per example) and the S1 labels.
ThresholdSet calibrate(const Tensor& s1_probs, std::span<const int> s1_labels, const std::map<int, double>& targets);

// mask[i] = OR over classes u of (probs[i][u] >= threshold[u]).
PassMask pass_mask(const Tensor& s1_probs, const ThresholdSet& thresholds);

// Measured TPR / FPR of a threshold set on labelled probabilities, treating
// the union of the threshold classes as the positive set.
struct OperatingPoint {
  double tpr = 0.0;
  double fpr = 0.0;
  double pass_fraction = 0.0;
};
OperatingPoint measure(const Tensor& s1_probs, std::span<const int> s1_labels, const ThresholdSet& thresholds);

struct ClassPartition {
  std::vector<int> assignment;  // S2 class id -> S1 class id
  std::size_t k = 0;
};

// Lloyd k-means over class-mean activation vectors, k-means++ seeding from
// `seed`; the partition with the lowest within-cluster sum of squares over
// `restarts` seedings is kept. Empty clusters are re-seeded with the point
// farthest from its current centroid.
ClassPartition cluster_classes(const std::vector<std::vector<double>>& class_means, std::size_t k,
                               std::uint64_t seed = 0, std::size_t restarts = 10);

// Within-cluster sum of squared distances of a partition.
double within_cluster_ss(const std::vector<std::vector<double>>& points, const std::vector<int>& assignment,
                         std::size_t k);

}  // namespace onion
