#include "onion/sparse_batch.hpp"

#include <algorithm>
#include <numeric>

namespace onion {

std::size_t PassMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(flags.begin(), flags.end(), [](auto f) { return f != 0; }));
}

double PassMask::pass_fraction() const noexcept {
  return flags.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(flags.size());
}

CompactionPlan plan_compaction(const PassMask& mask, std::size_t* mask_reads) {
  const std::size_t n = mask.size();
  std::size_t reads = 0;
  auto read = [&](std::size_t i) {
    ++reads;
    return mask.flags[i] != 0;
  };

  // Pass 1: popcount.
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) k += read(i) ? 1 : 0;

  // Pass 2: running counts; ones[i] = flags in [0, i).
  std::vector<std::size_t> ones(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) ones[i + 1] = ones[i] + (read(i) ? 1 : 0);
  if (mask_reads) *mask_reads = reads;

  CompactionPlan plan;
  plan.batch = n;
  plan.window_len = k;
  if (k == 0 || k == n) return plan;

  std::size_t best_start = 0, best_inside = 0;
  for (std::size_t s = 0; s + k <= n; ++s) {
    const std::size_t inside = ones[s + k] - ones[s];
    if (inside > best_inside) {
      best_inside = inside;
      best_start = s;
    }
  }
  plan.window_start = best_start;
  const std::size_t end = best_start + k;
  auto flagged = [&](std::size_t i) { return ones[i + 1] - ones[i] != 0; };

  std::size_t hole = best_start;
  auto next_hole = [&] {
    while (hole < end && flagged(hole)) ++hole;
    return hole++;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (i == best_start) {
      i = end - 1;
      continue;
    }
    if (flagged(i)) plan.moves.push_back({i, next_hole()});
  }
  return plan;
}

std::vector<std::size_t> apply_plan(const CompactionPlan& plan, std::span<Tensor* const> tensors) {
  for (const Tensor* t : tensors) {
    if (t->batch() != plan.batch)
      throw ShapeError("apply_plan: tensor batch " + std::to_string(t->batch()) + " does not match mask length " +
                       std::to_string(plan.batch));
  }
  for (Tensor* t : tensors) {
    for (const auto& mv : plan.moves) {
      auto src = t->row(mv.src);
      std::copy(src.begin(), src.end(), t->row(mv.dst).begin());
    }
  }
  std::vector<std::size_t> gather(plan.window_len);
  std::iota(gather.begin(), gather.end(), plan.window_start);
  for (const auto& mv : plan.moves) gather[mv.dst - plan.window_start] = mv.src;
  return gather;
}

Tensor scatter_back(const Tensor& window_output, std::span<const std::size_t> gather_map, std::size_t batch_size,
                    float reject_value) {
  if (window_output.batch() != gather_map.size())
    throw ShapeError("scatter_back: " + std::to_string(window_output.batch()) + " output rows for " +
                     std::to_string(gather_map.size()) + " gathered examples");
  Shape shape = window_output.shape();
  if (shape.empty()) shape = {0, 1};
  shape[0] = batch_size;
  Tensor out(shape, reject_value);
  for (std::size_t i = 0; i < gather_map.size(); ++i) {
    if (gather_map[i] >= batch_size) throw ShapeError("scatter_back: gather index out of range");
    auto src = window_output.row(i);
    std::copy(src.begin(), src.end(), out.row(gather_map[i]).begin());
  }
  return out;
}

}  // namespace onion
