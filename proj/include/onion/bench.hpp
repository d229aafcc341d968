#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "onion/cascade.hpp"
#include "onion/tensor.hpp"

namespace onion {

// ---------------------------------------------------------------------------
// Synthetic dataset

enum class Tier : std::uint8_t { EasyNegative, HardNegative, Positive };

// Single-channel square images. Positives carry an oriented bar (horizontal
// or vertical, alternating); easy negatives are pure noise; hard negatives
// carry a low-contrast compact blob.
struct DatasetConfig {
  std::size_t count = 1000;
  std::size_t size = 16;
  double easy_negative_fraction = 0.7;
  double hard_negative_fraction = 0.1;
  double positive_fraction = 0.2;
  double noise = 0.25;                                   // Gaussian std of the background
  double bar_contrast_min = 0.6, bar_contrast_max = 1.0;
  double blob_contrast_min = 0.4, blob_contrast_max = 0.8;
};

struct SyntheticDataset {
  Tensor images;                 // count x 1 x size x size
  std::vector<int> s1_labels;    // 1 = object, 0 = background
  std::vector<int> s2_labels;    // 0 = background, 1 = horizontal bar, 2 = vertical bar
  std::vector<Tier> tiers;

  std::size_t size() const noexcept { return s1_labels.size(); }
  SyntheticDataset subset(std::size_t start, std::size_t count) const;
};

inline constexpr std::size_t kSyntheticS2Classes = 3;

// Throws std::invalid_argument unless the fractions are in [0, 1] and sum to 1.
void validate(const DatasetConfig& config);

// Tier counts are exact (rounded, remainder to easy negatives) and their
// placement is a seeded shuffle. Deterministic for a fixed seed.
SyntheticDataset make_dataset(const DatasetConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Pass-fraction sweep

struct BenchModels {
  const CascadeModel* sharing = nullptr;
  const CascadeModel* monolithic = nullptr;
  const CascadeModel* non_sharing = nullptr;
};

struct BenchOptions {
  std::size_t reps = 10;
  std::size_t warmup = 5;
  std::uint64_t seed = 1;
  S2Layout layout = S2Layout::Compact;
  unsigned threads = 1;
};

struct Timing {
  double mean = 0.0;  // seconds
  double se = 0.0;    // standard error of the mean
};

struct BenchPoint {
  double p = 0.0;
  std::size_t survivors = 0;  // ceil(p * batch)
  Timing t, t_m, t_ns;
  // Per repetition, identical across repetitions.
  std::uint64_t macs = 0, macs_m = 0, macs_ns = 0;
  std::uint64_t s2_conv_calls = 0;
};

struct BenchRun {
  std::string spec;  // canonical text of the sharing spec
  std::size_t batch = 0;
  std::vector<double> p_grid;
  std::size_t reps = 0;
  std::size_t warmup = 0;
  unsigned threads = 1;
  S2Layout layout = S2Layout::Compact;
  std::uint64_t seed = 0;
  double timer_resolution = 0.0;  // seconds
  std::vector<BenchPoint> points;
};

Timing summarize(std::span<const double> samples);

// Imposes p directly: each repetition draws a mask with ceil(p * batch) ones
// at random positions, then times forward_s1 + compaction + S2 on the
// sharing cascade, the monolithic network on the full batch, and the
// non-sharing cascade under the same mask.
BenchRun sweep_p(const BenchModels& models, const Tensor& batch, std::span<const double> p_grid,
                 const BenchOptions& options);

// Columns p,t_mean,t_se,tM_mean,tM_se,tNS_mean,tNS_se with times in
// milliseconds, fixed 6 decimals.
void emit_csv(const BenchRun& run, std::ostream& os);
void emit_csv(const BenchRun& run, const std::string& path);

// JSON sidecar with the run metadata and per-point MAC counters.
void emit_metadata(const BenchRun& run, std::ostream& os);

std::string host_description();

}  // namespace onion
