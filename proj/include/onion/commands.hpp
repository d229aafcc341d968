#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "onion/arch.hpp"
#include "onion/bench.hpp"
#include "onion/cascade.hpp"
#include "onion/cost_model.hpp"

namespace onion {

// Invalid configuration. what() lists every problem found, one per line.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct RunConfig {
  std::string subcommand;

  std::string arch;  // path to an arch file
  std::optional<Variant> variant;  // default: the variant the arch file declares
  std::optional<InputShape> input;  // complexity: overrides the arch input shape

  // Dataset
  DatasetConfig train_data{.count = 10000};
  DatasetConfig test_data{.count = 2000};

  // Loss and optimiser
  double alpha = 0.5;
  S2Loss s2_loss = S2Loss::CrossEntropy;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t epochs = 10;
  std::size_t lr_decay_every = 0;  // epochs; 0 = constant rate
  double lr_decay_factor = 0.1;

  // Calibration
  std::map<int, double> target_tpr{{1, 0.9}};
  bool calibrate_on_heldout = false;

  // Paths
  std::string checkpoint;
  std::string thresholds;
  std::string out;
  std::string loss_log;

  std::uint64_t seed = 1;
  std::size_t batch_size = 0;  // 0 = subcommand default
  unsigned threads = 1;

  // Bench / complexity
  std::vector<double> p_grid;  // empty = 11-point uniform grid
  std::size_t reps = 50;
  std::size_t warmup = 5;
  bool compaction = true;
};

// Parses a flat "key = value" file ('#' starts a comment). Unknown keys and
// malformed values are collected and raised together as one ConfigError.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

// Throws ConfigError listing every violated constraint for cfg.subcommand.
void validate(const RunConfig& cfg);

std::string to_json(const RunConfig& cfg);

std::vector<double> parse_p_grid(const std::string& text);
std::map<int, double> parse_targets(const std::string& text);
InputShape parse_input_shape(const std::string& text);

std::size_t effective_batch_size(const RunConfig& cfg);

// Subcommands. Each validates first and writes human-readable progress to
// `log`. They throw ConfigError on configuration problems and other
// exceptions on runtime failures.
struct TrainSummary {
  std::vector<LossBreakdown> epochs;
  double train_accuracy = 0.0;
};
TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log);

struct CalibrateSummary {
  ThresholdSet thresholds;
  OperatingPoint train, heldout;
};
CalibrateSummary cmd_calibrate(const RunConfig& cfg, std::ostream& log);

struct InferSummary {
  double mean_pass_fraction = 0.0;  // p-bar over batches
  double s1_tpr = 0.0;              // objects passed / objects
  double accuracy = 0.0;            // over all examples, rejected rows predicted as background
  double s1_seconds = 0.0, s2_seconds = 0.0;
  std::uint64_t macs = 0;
  std::uint64_t monolithic_macs = 0;  // the monolithic network on the same examples
  std::vector<int> predictions;
};
InferSummary cmd_infer(const RunConfig& cfg, std::ostream& log);

CostReport cmd_complexity(const RunConfig& cfg, std::ostream& log);

BenchRun cmd_bench(const RunConfig& cfg, std::ostream& log);

// Picks the requested variant out of a parsed arch file.
ArchSpec select_variant(const ArchSpec& spec, std::optional<Variant> variant);

ArchSpec load_arch(const std::string& path);

}  // namespace onion
