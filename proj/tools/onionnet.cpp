// onionnet: train / calibrate / infer / complexity / bench for two-stage
// feature-sharing cascades.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "onion/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> arch, checkpoint, thresholds, out, variant, p_grid, input;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> batch_size, reps;
  std::optional<unsigned> threads;
  bool no_compaction = false;
  bool print_config = false;
};

onion::RunConfig resolve(const std::string& sub, const Flags& f) {
  onion::RunConfig cfg;
  if (!f.config.empty()) cfg = onion::load_config(f.config, cfg);
  cfg.subcommand = sub;
  std::vector<std::string> problems;
  if (f.arch) cfg.arch = *f.arch;
  if (f.checkpoint) cfg.checkpoint = *f.checkpoint;
  if (f.thresholds) cfg.thresholds = *f.thresholds;
  if (f.out) cfg.out = *f.out;
  if (f.seed) cfg.seed = *f.seed;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.reps) cfg.reps = *f.reps;
  if (f.threads) cfg.threads = *f.threads;
  if (f.no_compaction) cfg.compaction = false;
  if (f.variant) {
    if (auto v = onion::parse_variant(*f.variant)) cfg.variant = v;
    else problems.push_back("--variant: expected monolithic, sharing or non-sharing");
  }
  try {
    if (f.p_grid) cfg.p_grid = onion::parse_p_grid(*f.p_grid);
  } catch (const std::exception&) {
    problems.push_back("--p-grid: expected comma-separated fractions or uniform:<points>");
  }
  try {
    if (f.input) cfg.input = onion::parse_input_shape(*f.input);
  } catch (const std::exception&) {
    problems.push_back("--input: expected CxHxW");
  }
  if (!problems.empty()) throw onion::ConfigError(problems);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OnionNet feature-sharing cascades"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "flat key = value run configuration");
  app.add_option("--arch", f.arch, "architecture file");
  app.add_option("--checkpoint", f.checkpoint, "model checkpoint path");
  app.add_option("--thresholds", f.thresholds, "threshold table path");
  app.add_option("--out", f.out, "output path (CSV)");
  app.add_option("--seed", f.seed, "random seed");
  app.add_option("--batch-size", f.batch_size, "batch size");
  app.add_option("--p-grid", f.p_grid, "pass fractions, e.g. 0,0.5,1 or uniform:11");
  app.add_option("--reps", f.reps, "timed repetitions per p");
  app.add_option("--threads", f.threads, "worker threads for the convolution kernel");
  app.add_option("--variant", f.variant, "monolithic | sharing | non-sharing");
  app.add_option("--input", f.input, "input shape CxHxW for complexity");
  app.add_flag("--no-compaction", f.no_compaction, "run S2 row by row instead of compacting the batch");
  app.add_flag("--print-config", f.print_config, "print the resolved configuration as JSON and exit");

  const char* subs[][2] = {{"train", "joint training; writes a checkpoint and a per-epoch loss CSV"},
                           {"calibrate", "pick S1 thresholds for the target TPRs"},
                           {"infer", "run the cascade on the held-out split"},
                           {"complexity", "MAC / parameter report and t(p) curves"},
                           {"bench", "wall-clock sweep over the pass fraction p"}};
  for (const auto& s : subs) app.add_subcommand(s[0], s[1])->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? onion::kExitOk : onion::kExitConfig;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = resolve(sub, f);
    if (f.print_config) {
      std::cout << onion::to_json(cfg) << '\n';
      return onion::kExitOk;
    }
    if (sub == "train") onion::cmd_train(cfg, std::cout);
    else if (sub == "calibrate") onion::cmd_calibrate(cfg, std::cout);
    else if (sub == "infer") onion::cmd_infer(cfg, std::cout);
    else if (sub == "complexity") onion::cmd_complexity(cfg, std::cout);
    else onion::cmd_bench(cfg, std::cout);
  } catch (const onion::ConfigError& e) {
    std::cerr << "onionnet " << sub << ": " << e.what() << '\n';
    return onion::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "onionnet " << sub << ": error: " << e.what() << '\n';
    return onion::kExitRuntime;
  }
  return onion::kExitOk;
}
