#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "onion/arch.hpp"

namespace onion {

// Multiply-accumulate counts of one convolution stage in each variant.
struct StageCost {
  std::size_t layer = 0;                  // index into ArchSpec::layers
  std::size_t height = 0, width = 0;      // S2 / monolithic output size (m_l)
  std::uint64_t monolithic = 0;
  std::uint64_t s1 = 0;
  std::uint64_t s2_shared = 0;
  std::uint64_t s2_non_sharing = 0;
};

struct ParamCounts {
  std::uint64_t monolithic = 0;
  std::uint64_t s1 = 0;
  std::uint64_t s2_shared = 0;
  std::uint64_t s2_non_sharing = 0;
  std::uint64_t sharing_total() const { return s1 + s2_shared; }
  std::uint64_t non_sharing_total() const { return s1 + s2_non_sharing; }
};

struct CostReport {
  std::vector<StageCost> stages;
  std::uint64_t cost_m = 0;
  std::uint64_t cost_s1 = 0;
  std::uint64_t cost_s2_shared = 0;
  std::uint64_t cost_s2_ns = 0;
  ParamCounts params;
  std::size_t d1 = 0, d2 = 0;
};

struct CostOptions {
  // Adds pooling (window^2 per output element) and ReLU (1 per element)
  // operations to the convolution MACs.
  bool include_pool_relu = false;
};

// MAC accounting: every convolution costs in_channels * s^2 * out_channels *
// output height * output width per example. Accepts sharing and monolithic
// specs (a monolithic spec is its own cascade with an empty S1).
CostReport mac_count(const ArchSpec& spec, const InputShape& input, const CostOptions& options = {});

// Weights plus biases per variant; no spatial factors.
ParamCounts param_count(const ArchSpec& spec);

struct CostCurve {
  std::vector<double> p;
  std::vector<double> t;     // cost_s1 + p * cost_s2_shared
  std::vector<double> t_m;   // cost_m
  std::vector<double> t_ns;  // cost_s1 + p * cost_s2_ns
  double crossover = 0.0;    // 1 - cost_s1 / cost_m: t_ns exceeds t_m beyond it
};

// A report without S1 (monolithic spec) gives t = t_NS = t_M at every p.
CostCurve curves(const CostReport& report, std::span<const double> p_grid);

std::vector<double> uniform_grid(std::size_t points);

// CSV with header p,t,t_M,t_NS, one row per grid value, then a summary row
// "crossover_p,<p*>,,".
void write_curve_csv(const CostCurve& curve, std::ostream& os);

}  // namespace onion
