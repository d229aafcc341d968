#include "onion/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace onion {

namespace {

std::string join_lines(const std::vector<std::string>& items) {
  std::string s = "invalid configuration:";
  for (const auto& i : items) s += "\n  " + i;
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument(v);
  return d;
}

std::uint64_t to_uint(const std::string& v) {
  if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
  std::size_t pos = 0;
  const auto u = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument(v);
  return u;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument(v);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError({"cannot read '" + path + "'"});
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_lines(problems)), problems_(std::move(problems)) {}

std::vector<double> parse_p_grid(const std::string& text) {
  std::vector<double> grid;
  if (trim(text).empty()) return grid;
  // "uniform:<points>" or a comma-separated list
  if (text.rfind("uniform:", 0) == 0) return uniform_grid(to_uint(trim(text.substr(8))));
  for (const auto& item : split(text, ',')) grid.push_back(to_double(item));
  return grid;
}

std::map<int, double> parse_targets(const std::string& text) {
  std::map<int, double> out;
  for (const auto& item : split(text, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("expected <class>:<tpr>, got '" + item + "'");
    out[static_cast<int>(std::stoi(trim(item.substr(0, colon))))] = to_double(trim(item.substr(colon + 1)));
  }
  return out;
}

InputShape parse_input_shape(const std::string& text) {
  const auto parts = split(text, 'x');
  InputShape in;
  if (parts.size() == 1) {
    in.channels = to_uint(parts[0]);
  } else if (parts.size() == 3) {
    in.channels = to_uint(parts[0]);
    in.height = to_uint(parts[1]);
    in.width = to_uint(parts[2]);
  } else {
    throw std::invalid_argument("expected C or CxHxW, got '" + text + "'");
  }
  return in;
}

RunConfig parse_config(const std::string& text, RunConfig cfg) {
  std::vector<std::string> problems;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) {
      problems.push_back(where + "expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    try {
      if (key == "subcommand") cfg.subcommand = v;
      else if (key == "arch") cfg.arch = v;
      else if (key == "variant") {
        const auto parsed = parse_variant(v);
        if (!parsed) throw std::invalid_argument(v);
        cfg.variant = parsed;
      }
      else if (key == "input") cfg.input = parse_input_shape(v);
      else if (key == "train_count") cfg.train_data.count = to_uint(v);
      else if (key == "test_count") cfg.test_data.count = to_uint(v);
      else if (key == "image_size") cfg.train_data.size = cfg.test_data.size = to_uint(v);
      else if (key == "easy_negative_fraction") cfg.train_data.easy_negative_fraction = cfg.test_data.easy_negative_fraction = to_double(v);
      else if (key == "hard_negative_fraction") cfg.train_data.hard_negative_fraction = cfg.test_data.hard_negative_fraction = to_double(v);
      else if (key == "positive_fraction") cfg.train_data.positive_fraction = cfg.test_data.positive_fraction = to_double(v);
      else if (key == "noise") cfg.train_data.noise = cfg.test_data.noise = to_double(v);
      else if (key == "alpha") cfg.alpha = to_double(v);
      else if (key == "s2_loss") {
        if (v == "cross-entropy") cfg.s2_loss = S2Loss::CrossEntropy;
        else if (v == "hinge") cfg.s2_loss = S2Loss::BinaryHinge;
        else throw std::invalid_argument(v);
      }
      else if (key == "lr") cfg.lr = to_double(v);
      else if (key == "momentum") cfg.momentum = to_double(v);
      else if (key == "weight_decay") cfg.weight_decay = to_double(v);
      else if (key == "epochs") cfg.epochs = to_uint(v);
      else if (key == "lr_decay_every") cfg.lr_decay_every = to_uint(v);
      else if (key == "lr_decay_factor") cfg.lr_decay_factor = to_double(v);
      else if (key == "target_tpr") cfg.target_tpr = parse_targets(v);
      else if (key == "calibrate_on") {
        if (v == "train") cfg.calibrate_on_heldout = false;
        else if (v == "heldout") cfg.calibrate_on_heldout = true;
        else throw std::invalid_argument(v);
      }
      else if (key == "checkpoint") cfg.checkpoint = v;
      else if (key == "thresholds") cfg.thresholds = v;
      else if (key == "out") cfg.out = v;
      else if (key == "loss_log") cfg.loss_log = v;
      else if (key == "seed") cfg.seed = to_uint(v);
      else if (key == "batch_size") cfg.batch_size = to_uint(v);
      else if (key == "threads") cfg.threads = static_cast<unsigned>(to_uint(v));
      else if (key == "p_grid") cfg.p_grid = parse_p_grid(v);
      else if (key == "reps") cfg.reps = to_uint(v);
      else if (key == "warmup") cfg.warmup = to_uint(v);
      else if (key == "compaction") cfg.compaction = to_bool(v);
      else problems.push_back(where + "unknown key '" + key + "'");
    } catch (const std::exception&) {
      problems.push_back(where + "bad value '" + v + "' for " + key);
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
  return cfg;
}

RunConfig load_config(const std::string& path, RunConfig base) { return parse_config(read_file(path), std::move(base)); }

void validate(const RunConfig& cfg) {
  std::vector<std::string> p;
  const std::string& sub = cfg.subcommand;
  static const std::vector<std::string> known{"train", "calibrate", "infer", "complexity", "bench"};
  if (std::find(known.begin(), known.end(), sub) == known.end()) p.push_back("unknown subcommand '" + sub + "'");

  const bool needs_arch = sub == "train" || sub == "complexity" || sub == "bench";
  const bool needs_data = sub == "train" || sub == "calibrate" || sub == "infer";
  if (needs_arch && cfg.arch.empty()) p.push_back("arch: an architecture file is required");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) p.push_back("alpha must lie in (0, 1), got " + std::to_string(cfg.alpha));
  for (const auto& [cls, t] : cfg.target_tpr) {
    if (!(t > 0.0 && t <= 1.0)) p.push_back("target_tpr for class " + std::to_string(cls) + " must lie in (0, 1]");
    if (cls < 0) p.push_back("target_tpr class ids must be >= 0");
  }
  if (sub == "calibrate" && cfg.target_tpr.empty()) p.push_back("target_tpr: at least one class of interest is needed");
  if (!(cfg.lr > 0.0)) p.push_back("lr must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) p.push_back("momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) p.push_back("weight_decay must be >= 0");
  if (!(cfg.lr_decay_factor > 0.0)) p.push_back("lr_decay_factor must be positive");
  if (cfg.threads == 0) p.push_back("threads must be >= 1");
  if (needs_data) {
    for (const auto* d : {&cfg.train_data, &cfg.test_data}) {
      try {
        onion::validate(*d);
      } catch (const std::invalid_argument& e) {
        p.push_back(e.what());
        break;
      }
    }
    if (cfg.train_data.count == 0) p.push_back("train_count must be positive");
    if (sub != "train" && cfg.test_data.count == 0) p.push_back("test_count must be positive");
  }
  if ((sub == "train" || sub == "calibrate" || sub == "infer") && cfg.checkpoint.empty())
    p.push_back("checkpoint: a checkpoint path is required");
  if (sub == "calibrate" && cfg.thresholds.empty()) p.push_back("thresholds: a threshold file path is required");
  for (double v : cfg.p_grid)
    if (!(v >= 0.0 && v <= 1.0)) p.push_back("p_grid value " + std::to_string(v) + " outside [0, 1]");
  if (sub == "bench") {
    if (cfg.reps < 2) p.push_back("reps must be >= 2");
    if (cfg.out.empty()) p.push_back("out: a CSV path is required");
  }
  if (cfg.input && (cfg.input->height == 0 || cfg.input->width == 0))
    p.push_back("input must give CxHxW with positive extents");
  if (!p.empty()) throw ConfigError(p);
}

std::string to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["subcommand"] = c.subcommand;
  j["arch"] = c.arch;
  j["variant"] = c.variant ? std::string(to_string(*c.variant)) : "";
  if (c.input) j["input"] = {c.input->channels, c.input->height, c.input->width};
  auto data = [](const DatasetConfig& d) {
    return nlohmann::ordered_json{{"count", d.count},
                                  {"size", d.size},
                                  {"easy_negative_fraction", d.easy_negative_fraction},
                                  {"hard_negative_fraction", d.hard_negative_fraction},
                                  {"positive_fraction", d.positive_fraction},
                                  {"noise", d.noise}};
  };
  j["train_data"] = data(c.train_data);
  j["test_data"] = data(c.test_data);
  j["alpha"] = c.alpha;
  j["s2_loss"] = c.s2_loss == S2Loss::CrossEntropy ? "cross-entropy" : "hinge";
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["lr_decay_every"] = c.lr_decay_every;
  j["lr_decay_factor"] = c.lr_decay_factor;
  auto& t = j["target_tpr"] = nlohmann::ordered_json::object();
  for (const auto& [cls, v] : c.target_tpr) t[std::to_string(cls)] = v;
  j["calibrate_on"] = c.calibrate_on_heldout ? "heldout" : "train";
  j["checkpoint"] = c.checkpoint;
  j["thresholds"] = c.thresholds;
  j["out"] = c.out;
  j["loss_log"] = c.loss_log;
  j["seed"] = c.seed;
  j["batch_size"] = c.batch_size;
  j["threads"] = c.threads;
  j["p_grid"] = c.p_grid;
  j["reps"] = c.reps;
  j["warmup"] = c.warmup;
  j["compaction"] = c.compaction;
  return j.dump(2);
}

std::size_t effective_batch_size(const RunConfig& cfg) {
  if (cfg.batch_size > 0) return cfg.batch_size;
  if (cfg.subcommand == "train") return 32;
  if (cfg.subcommand == "bench") return 120;
  return 256;
}

ArchSpec load_arch(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return parse_arch(text);
  } catch (const ParseError& e) {
    throw ConfigError({path + ": " + e.what()});
  }
}

ArchSpec select_variant(const ArchSpec& spec, std::optional<Variant> variant) {
  if (!variant || *variant == spec.variant) return spec;
  if (spec.variant != Variant::Sharing)
    throw ConfigError({"variant: a " + std::string(to_string(spec.variant)) + " arch cannot be turned into " +
                       std::string(to_string(*variant))});
  const auto v = derive_variants(spec);
  return *variant == Variant::Monolithic ? v.monolithic : v.non_sharing;
}

namespace {

// Train and test splits come from independent seeds derived from the run seed.
SyntheticDataset train_split(const RunConfig& cfg) { return make_dataset(cfg.train_data, cfg.seed * 2 + 1); }
SyntheticDataset test_split(const RunConfig& cfg) { return make_dataset(cfg.test_data, cfg.seed * 2 + 2); }

struct ThreadScope {
  unsigned saved;
  explicit ThreadScope(unsigned n) : saved(num_threads()) { set_num_threads(n); }
  ~ThreadScope() { set_num_threads(saved); }
};

void require_input_matches(const ArchSpec& spec, const DatasetConfig& d) {
  const auto& in = spec.input;
  if (in.channels != 1 || (in.height != 0 && (in.height != d.size || in.width != d.size)))
    throw ConfigError({"arch input " + std::to_string(in.channels) + "x" + std::to_string(in.height) + "x" +
                       std::to_string(in.width) + " does not match the 1x" + std::to_string(d.size) + "x" +
                       std::to_string(d.size) + " synthetic images"});
}

Tensor all_s1_probs(const CascadeModel& model, const Tensor& images, std::size_t batch) {
  const std::size_t n = images.batch();
  std::vector<float> values;
  std::size_t k = 0;
  for (std::size_t start = 0; start < n; start += batch) {
    const auto chunk = images.rows(start, std::min(batch, n - start));
    const Tensor p = s1_probabilities(forward_s1(model, chunk));
    k = p.row_size();
    values.insert(values.end(), p.data().begin(), p.data().end());
  }
  return Tensor({n, k, 1, 1}, std::move(values));
}

void write_loss_log(const std::string& path, const std::vector<LossBreakdown>& epochs) {
  auto f = open_out(path);
  f << "epoch,loss_total,loss_s1,loss_s2\n" << std::fixed << std::setprecision(6);
  for (std::size_t e = 0; e < epochs.size(); ++e)
    f << e + 1 << ',' << epochs[e].total << ',' << epochs[e].s1 << ',' << epochs[e].s2 << '\n';
}

}  // namespace

TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  const ArchSpec spec = select_variant(load_arch(cfg.arch), cfg.variant);
  if (spec.has_residual()) throw ConfigError({"arch: residual blocks are supported by the cost model only"});
  require_input_matches(spec, cfg.train_data);
  if (spec.s2_class_count != kSyntheticS2Classes && !(spec.s2_class_count == 1 && cfg.s2_loss == S2Loss::BinaryHinge))
    throw ConfigError({"arch: the S2 head must have " + std::to_string(kSyntheticS2Classes) + " outputs"});
  if (spec.variant != Variant::Monolithic && spec.s1_class_count != 2)
    throw ConfigError({"arch: the S1 head must have 2 outputs (background / object)"});

  ThreadScope threads(cfg.threads);
  const auto data = train_split(cfg);
  CascadeModel model = build(spec, cfg.seed);
  const std::size_t n = data.size(), bs = effective_batch_size(cfg);
  std::vector<int> s2_labels = data.s2_labels;
  if (spec.s2_class_count == 1)  // single hinge output: object vs background
    for (std::size_t i = 0; i < n; ++i) s2_labels[i] = data.s1_labels[i];

  TrainSummary summary;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  SgdConfig sgd{static_cast<float>(cfg.lr), static_cast<float>(cfg.momentum), static_cast<float>(cfg.weight_decay)};
  const JointLossConfig loss{cfg.alpha, cfg.s2_loss};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.lr_decay_every > 0 && epoch > 0 && epoch % cfg.lr_decay_every == 0) sgd.lr *= cfg.lr_decay_factor;
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown sum;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t m = std::min(bs, n - start);
      const std::span<const std::size_t> idx(order.data() + start, m);
      std::vector<int> l1(m), l2(m);
      for (std::size_t i = 0; i < m; ++i) {
        l1[i] = data.s1_labels[idx[i]];
        l2[i] = s2_labels[idx[i]];
      }
      const auto l = train_step(model, data.images.gather_rows(idx), l1, l2, loss, sgd);
      const double w = static_cast<double>(m) / static_cast<double>(n);
      sum.total += w * l.total;
      sum.s1 += w * l.s1;
      sum.s2 += w * l.s2;
    }
    summary.epochs.push_back(sum);
    log << "epoch " << epoch + 1 << "/" << cfg.epochs << "  loss " << std::fixed << std::setprecision(4) << sum.total
        << " (S1 " << sum.s1 << ", S2 " << sum.s2 << ")" << std::defaultfloat << '\n';
  }

  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += 256) {
    const std::size_t m = std::min<std::size_t>(256, n - start);
    auto s1 = forward_s1(model, data.images.rows(start, m));
    const auto d = s2_decisions(forward_s2_dense(model, s1.shared));
    for (std::size_t i = 0; i < m; ++i) correct += d[i] == s2_labels[start + i];
  }
  summary.train_accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  log << "train accuracy (S2, every example) " << summary.train_accuracy << '\n';

  save_checkpoint(model, cfg.checkpoint);
  log << "checkpoint written to " << cfg.checkpoint << '\n';
  if (!cfg.loss_log.empty()) {
    write_loss_log(cfg.loss_log, summary.epochs);
    log << "loss log written to " << cfg.loss_log << '\n';
  }
  return summary;
}

CalibrateSummary cmd_calibrate(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  ThreadScope threads(cfg.threads);
  const CascadeModel model = load_checkpoint(cfg.checkpoint);
  if (!model.has_s1()) throw ConfigError({"calibrate: a monolithic model has no S1 to calibrate"});
  require_input_matches(model.spec(), cfg.train_data);
  for (const auto& [cls, t] : cfg.target_tpr)
    if (static_cast<std::size_t>(cls) >= model.spec().s1_class_count)
      throw ConfigError({"target_tpr: class " + std::to_string(cls) + " is not an S1 class"});

  const auto train = train_split(cfg);
  const auto test = test_split(cfg);
  const std::size_t bs = effective_batch_size(cfg);
  const Tensor p_train = all_s1_probs(model, train.images, bs);
  const Tensor p_test = all_s1_probs(model, test.images, bs);

  CalibrateSummary s;
  s.thresholds = cfg.calibrate_on_heldout ? calibrate(p_test, test.s1_labels, cfg.target_tpr)
                                          : calibrate(p_train, train.s1_labels, cfg.target_tpr);
  s.train = measure(p_train, train.s1_labels, s.thresholds);
  s.heldout = measure(p_test, test.s1_labels, s.thresholds);
  {
    auto f = open_out(cfg.thresholds);
    s.thresholds.write(f);
  }
  for (const auto& [cls, e] : s.thresholds.entries)
    log << "class " << cls << ": target TPR " << e.target_tpr << ", threshold " << e.threshold << ", TPR "
        << e.achieved_tpr << ", FPR " << e.achieved_fpr << '\n';
  log << "train:    TPR " << s.train.tpr << "  FPR " << s.train.fpr << "  p " << s.train.pass_fraction << '\n';
  log << "held-out: TPR " << s.heldout.tpr << "  FPR " << s.heldout.fpr << "  p " << s.heldout.pass_fraction << '\n';
  log << "thresholds written to " << cfg.thresholds << '\n';
  return s;
}

InferSummary cmd_infer(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  ThreadScope threads(cfg.threads);
  const CascadeModel model = load_checkpoint(cfg.checkpoint);
  require_input_matches(model.spec(), cfg.test_data);
  ThresholdSet thresholds;
  if (model.has_s1()) {
    if (cfg.thresholds.empty()) throw ConfigError({"thresholds: a cascade needs a threshold file"});
    std::ifstream f(cfg.thresholds);
    if (!f) throw ConfigError({"cannot read '" + cfg.thresholds + "'"});
    thresholds = ThresholdSet::read(f);
  }
  const auto test = test_split(cfg);
  const std::size_t n = test.size(), bs = effective_batch_size(cfg);
  const auto layout = cfg.compaction ? S2Layout::Compact : S2Layout::RowByRow;
  const bool hinge = model.spec().s2_class_count == 1;

  InferSummary s;
  s.predictions.reserve(n);
  double p_sum = 0.0;
  std::size_t batches = 0, objects = 0, objects_passed = 0, correct = 0;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t m = std::min(bs, n - start);
    const auto r = infer_cascade(model, test.images.rows(start, m), thresholds, layout);
    p_sum += r.stats.pass_fraction;
    ++batches;
    s.s1_seconds += r.stats.s1_seconds;
    s.s2_seconds += r.stats.s2_seconds;
    s.macs += r.stats.macs;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t k = start + i;
      const int pred = r.predictions[i];
      s.predictions.push_back(pred);
      if (test.s1_labels[k] == 1) {
        ++objects;
        objects_passed += r.mask[i];
      }
      const int truth = hinge ? test.s1_labels[k] : test.s2_labels[k];
      correct += (pred == kRejectLabel ? 0 : pred) == truth;
    }
  }
  s.mean_pass_fraction = batches ? p_sum / static_cast<double>(batches) : 0.0;
  s.s1_tpr = objects ? static_cast<double>(objects_passed) / static_cast<double>(objects) : 0.0;
  s.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  InputShape in = model.spec().input;
  if (in.height == 0) in.height = in.width = cfg.test_data.size;
  s.monolithic_macs = mac_count(model.spec(), in).cost_m * n;

  log << "examples " << n << ", batches " << batches << '\n'
      << "p-bar " << s.mean_pass_fraction << ", S1 TPR " << s.s1_tpr << ", accuracy " << s.accuracy << '\n'
      << "time S1 " << s.s1_seconds << " s, S2 " << s.s2_seconds << " s\n"
      << "conv MACs " << s.macs << " (monolithic " << s.monolithic_macs << ", ratio "
      << static_cast<double>(s.macs) / static_cast<double>(std::max<std::uint64_t>(1, s.monolithic_macs)) << ")\n";
  if (!cfg.out.empty()) {
    auto f = open_out(cfg.out);
    f << "index,prediction,s1_label,s2_label\n";
    for (std::size_t i = 0; i < n; ++i)
      f << i << ',' << s.predictions[i] << ',' << test.s1_labels[i] << ',' << test.s2_labels[i] << '\n';
    log << "predictions written to " << cfg.out << '\n';
  }
  return s;
}

CostReport cmd_complexity(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  const ArchSpec spec = select_variant(load_arch(cfg.arch), cfg.variant);
  const InputShape in = cfg.input ? *cfg.input : spec.input;
  if (in.height == 0 || in.width == 0)
    throw ConfigError({"complexity: the arch has no spatial input size; pass --input CxHxW"});
  CostReport r;
  try {
    r = mac_count(spec, in);
  } catch (const ParseError& e) {
    throw ConfigError({e.what()});
  }
  const auto grid = cfg.p_grid.empty() ? uniform_grid(11) : cfg.p_grid;
  const auto curve = curves(r, grid);

  log << "arch " << to_text(spec) << '\n'
      << "input " << in.channels << 'x' << in.height << 'x' << in.width << ", depths d1 = " << r.d1
      << ", d2 = " << r.d2 << '\n'
      << "layer       m        M          S1      S2 shared  S2 non-sharing\n";
  for (const auto& st : r.stages)
    log << std::setw(5) << st.layer << std::setw(5) << st.height << 'x' << std::setw(3) << st.width << std::setw(12)
        << st.monolithic << std::setw(12) << st.s1 << std::setw(12) << st.s2_shared << std::setw(12)
        << st.s2_non_sharing << '\n';
  log << "cost_M " << r.cost_m << "  cost_S1 " << r.cost_s1 << "  cost_S2_shared " << r.cost_s2_shared
      << "  cost_S2_ns " << r.cost_s2_ns << '\n'
      << "params M " << r.params.monolithic << "  sharing " << r.params.sharing_total() << "  non-sharing "
      << r.params.non_sharing_total() << '\n'
      << "crossover p* = " << std::setprecision(6) << std::fixed << curve.crossover << std::defaultfloat << '\n';
  if (cfg.out.empty() || cfg.out == "-") {
    write_curve_csv(curve, log);
  } else {
    auto f = open_out(cfg.out);
    write_curve_csv(curve, f);
    log << "curves written to " << cfg.out << '\n';
  }
  return r;
}

BenchRun cmd_bench(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  const ArchSpec spec = load_arch(cfg.arch);
  if (spec.variant != Variant::Sharing) throw ConfigError({"bench: the arch must describe a sharing cascade"});
  InputShape in = spec.input;
  if (in.height == 0) throw ConfigError({"bench: the arch must give in=CxHxW"});

  const auto v = derive_variants(spec);
  const CascadeModel sharing = build(v.sharing, cfg.seed);
  const CascadeModel mono = build(v.monolithic, cfg.seed);
  const CascadeModel ns = build(v.non_sharing, cfg.seed);
  const std::size_t n = effective_batch_size(cfg);
  Tensor batch({n, in.channels, in.height, in.width});
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& x : batch.data()) x = dist(rng);

  BenchOptions opt;
  opt.reps = cfg.reps;
  opt.warmup = cfg.warmup;
  opt.seed = cfg.seed;
  opt.layout = cfg.compaction ? S2Layout::Compact : S2Layout::RowByRow;
  opt.threads = cfg.threads;
  const auto grid = cfg.p_grid.empty() ? uniform_grid(11) : cfg.p_grid;
  const auto run = sweep_p({&sharing, &mono, &ns}, batch, grid, opt);

  emit_csv(run, cfg.out);
  {
    auto f = open_out(cfg.out + ".json");
    emit_metadata(run, f);
  }
  log << "batch " << n << ", reps " << run.reps << ", warm-up " << run.warmup << ", threads " << run.threads << '\n'
      << "    p      t [ms]        t_M [ms]      t_NS [ms]\n";
  for (const auto& pt : run.points)
    log << std::fixed << std::setprecision(2) << std::setw(6) << pt.p << std::setprecision(3) << std::setw(10)
        << pt.t.mean * 1e3 << " +- " << std::setw(6) << pt.t.se * 1e3 << std::setw(10) << pt.t_m.mean * 1e3 << " +- "
        << std::setw(6) << pt.t_m.se * 1e3 << std::setw(10) << pt.t_ns.mean * 1e3 << " +- " << std::setw(6)
        << pt.t_ns.se * 1e3 << std::defaultfloat << '\n';
  log << "results written to " << cfg.out << " and " << cfg.out << ".json\n";
  return run;
}

}  // namespace onion
