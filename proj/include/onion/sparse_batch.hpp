#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "onion/tensor.hpp"

namespace onion {

// Per-example flags: 1 = the example passed S1 and must be evaluated by S2.
struct PassMask {
  std::vector<std::uint8_t> flags;

  PassMask() = default;
  explicit PassMask(std::size_t n, bool value = false) : flags(n, value ? 1 : 0) {}
  explicit PassMask(std::vector<std::uint8_t> f) : flags(std::move(f)) {}

  std::size_t size() const noexcept { return flags.size(); }
  std::size_t count() const noexcept;
  bool operator[](std::size_t i) const { return flags[i] != 0; }
  double pass_fraction() const noexcept;
  bool operator==(const PassMask&) const = default;
};

struct RowMove {
  std::size_t src = 0;
  std::size_t dst = 0;
  bool operator==(const RowMove&) const = default;
};

// After the moves are executed as row copies, the flagged rows occupy
// [window_start, window_start + window_len). Sources lie outside the window
// and destinations are unflagged rows inside it.
struct CompactionPlan {
  std::size_t batch = 0;
  std::size_t window_start = 0;
  std::size_t window_len = 0;
  std::vector<RowMove> moves;
};

// Minimal-move compaction. The mask is scanned exactly twice: once to count
// the flags, once to build running counts from which the best (leftmost on
// ties) window and the moves are derived. `mask_reads`, when given, receives
// the number of element reads performed.
CompactionPlan plan_compaction(const PassMask& mask, std::size_t* mask_reads = nullptr);

// Executes the plan on every tensor (all must share the batch extent) and
// returns the gather map: entry i is the original row now at window_start + i.
std::vector<std::size_t> apply_plan(const CompactionPlan& plan, std::span<Tensor* const> tensors);

// Full-batch output whose row gather_map[i] is row i of `window_output` and
// whose remaining rows are filled with reject_value.
Tensor scatter_back(const Tensor& window_output, std::span<const std::size_t> gather_map, std::size_t batch_size,
                    float reject_value);

}  // namespace onion
