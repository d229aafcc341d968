#include "onion/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace onion {

SyntheticDataset SyntheticDataset::subset(std::size_t start, std::size_t count) const {
  if (start + count > size()) throw std::out_of_range("SyntheticDataset::subset: range exceeds the dataset");
  SyntheticDataset out;
  out.images = images.rows(start, count);
  auto slice = [&](const auto& v) { return std::vector(v.begin() + static_cast<std::ptrdiff_t>(start),
                                                       v.begin() + static_cast<std::ptrdiff_t>(start + count)); };
  out.s1_labels = slice(s1_labels);
  out.s2_labels = slice(s2_labels);
  out.tiers = slice(tiers);
  return out;
}

void validate(const DatasetConfig& c) {
  std::ostringstream err;
  for (auto [name, f] : {std::pair{"easy_negative_fraction", c.easy_negative_fraction},
                         std::pair{"hard_negative_fraction", c.hard_negative_fraction},
                         std::pair{"positive_fraction", c.positive_fraction}})
    if (!(f >= 0.0 && f <= 1.0)) err << name << " = " << f << " is outside [0, 1]; ";
  const double sum = c.easy_negative_fraction + c.hard_negative_fraction + c.positive_fraction;
  if (std::abs(sum - 1.0) > 1e-9) err << "tier fractions sum to " << sum << ", not 1; ";
  if (c.size < 4) err << "image size must be >= 4; ";
  if (c.noise < 0.0) err << "noise must be >= 0; ";
  if (!err.str().empty()) throw std::invalid_argument("dataset config: " + err.str());
}

namespace {

void add_bar(std::span<float> img, std::size_t n, bool horizontal, float contrast, std::mt19937_64& rng) {
  const std::size_t len = std::uniform_int_distribution<std::size_t>(n / 2, n - 2)(rng);
  const std::size_t along = std::uniform_int_distribution<std::size_t>(0, n - len)(rng);
  const std::size_t across = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
  for (std::size_t a = along; a < along + len; ++a)
    for (std::size_t t = across; t < across + 2; ++t) img[horizontal ? t * n + a : a * n + t] += contrast;
}

void add_blob(std::span<float> img, std::size_t n, float contrast, std::mt19937_64& rng) {
  const std::size_t side = std::uniform_int_distribution<std::size_t>(3, 4)(rng);
  const std::size_t y = std::uniform_int_distribution<std::size_t>(0, n - side)(rng);
  const std::size_t x = std::uniform_int_distribution<std::size_t>(0, n - side)(rng);
  for (std::size_t i = y; i < y + side; ++i)
    for (std::size_t j = x; j < x + side; ++j) img[i * n + j] += contrast;
}

}  // namespace

SyntheticDataset make_dataset(const DatasetConfig& config, std::uint64_t seed) {
  validate(config);
  const std::size_t n = config.count, side = config.size;
  const auto pos = static_cast<std::size_t>(std::llround(config.positive_fraction * static_cast<double>(n)));
  const auto hard = std::min(n - pos, static_cast<std::size_t>(std::llround(config.hard_negative_fraction * static_cast<double>(n))));

  std::vector<Tier> tiers(n, Tier::EasyNegative);
  std::fill_n(tiers.begin(), pos, Tier::Positive);
  std::fill_n(tiers.begin() + static_cast<std::ptrdiff_t>(pos), hard, Tier::HardNegative);
  std::mt19937_64 rng(seed);
  std::shuffle(tiers.begin(), tiers.end(), rng);

  SyntheticDataset ds;
  ds.images = Tensor({n, 1, side, side});
  ds.s1_labels.resize(n);
  ds.s2_labels.resize(n);
  ds.tiers = tiers;
  std::normal_distribution<float> noise(0.0f, static_cast<float>(config.noise));
  std::uniform_real_distribution<float> bar_c(static_cast<float>(config.bar_contrast_min),
                                              static_cast<float>(config.bar_contrast_max));
  std::uniform_real_distribution<float> blob_c(static_cast<float>(config.blob_contrast_min),
                                               static_cast<float>(config.blob_contrast_max));
  std::size_t positives_seen = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto img = ds.images.row(i);
    for (auto& v : img) v = noise(rng);
    switch (tiers[i]) {
      case Tier::Positive: {
        const bool horizontal = positives_seen++ % 2 == 0;
        add_bar(img, side, horizontal, bar_c(rng), rng);
        ds.s1_labels[i] = 1;
        ds.s2_labels[i] = horizontal ? 1 : 2;
        break;
      }
      case Tier::HardNegative:
        add_blob(img, side, blob_c(rng), rng);
        [[fallthrough]];
      case Tier::EasyNegative:
        ds.s1_labels[i] = 0;
        ds.s2_labels[i] = 0;
        break;
    }
  }
  return ds;
}

Timing summarize(std::span<const double> samples) {
  Timing t;
  if (samples.empty()) return t;
  const double n = static_cast<double>(samples.size());
  t.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - t.mean) * (s - t.mean);
    t.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return t;
}

namespace {

using Clock = std::chrono::steady_clock;

PassMask random_mask(std::size_t n, std::size_t ones, std::mt19937_64& rng) {
  std::vector<std::uint8_t> flags(n, 0);
  std::fill_n(flags.begin(), ones, 1);
  std::shuffle(flags.begin(), flags.end(), rng);
  return PassMask(std::move(flags));
}

struct Measured {
  double seconds = 0.0;
  std::uint64_t macs = 0;
  std::uint64_t calls = 0;
};

Measured timed(const CascadeModel& model, const Tensor& batch, const PassMask& mask, S2Layout layout) {
  const auto before = kernel_counters();
  const auto t0 = Clock::now();
  const auto res = infer_with_mask(model, batch, mask, layout);
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  const auto after = kernel_counters();
  return {s, after.conv_macs - before.conv_macs, after.conv_calls - before.conv_calls};
}

std::size_t s1_conv_count(const CascadeModel& m) {
  return static_cast<std::size_t>(
      std::count_if(m.stages().begin(), m.stages().end(), [](const StageWeights& s) { return s.s1.has_value(); }));
}

}  // namespace

BenchRun sweep_p(const BenchModels& models, const Tensor& batch, std::span<const double> p_grid,
                 const BenchOptions& options) {
  if (!models.sharing || !models.monolithic || !models.non_sharing)
    throw std::invalid_argument("sweep_p: all three models are required");
  if (options.reps < 2) throw std::invalid_argument("sweep_p: repetitions must be >= 2");
  for (double p : p_grid)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sweep_p: p = " + std::to_string(p) + " outside [0, 1]");

  const unsigned saved_threads = num_threads();
  set_num_threads(options.threads);

  BenchRun run;
  run.spec = to_text(models.sharing->spec());
  run.batch = batch.batch();
  run.p_grid.assign(p_grid.begin(), p_grid.end());
  run.reps = options.reps;
  run.warmup = options.warmup;
  run.threads = options.threads;
  run.layout = options.layout;
  run.seed = options.seed;
  run.timer_resolution = std::chrono::duration<double>(Clock::duration(1)).count();

  std::mt19937_64 rng(options.seed);
  const PassMask full(run.batch, true);
  const std::size_t s1_convs = s1_conv_count(*models.sharing);
  for (double p : p_grid) {
    BenchPoint pt;
    pt.p = p;
    // The epsilon keeps p * batch values like 0.3 * 10 from rounding up.
    pt.survivors = std::min(run.batch, static_cast<std::size_t>(std::ceil(p * static_cast<double>(run.batch) - 1e-9)));
    for (std::size_t w = 0; w < options.warmup; ++w) {
      const auto mask = random_mask(run.batch, pt.survivors, rng);
      timed(*models.sharing, batch, mask, options.layout);
      timed(*models.monolithic, batch, full, options.layout);
      timed(*models.non_sharing, batch, mask, options.layout);
    }
    std::vector<double> t, tm, tns;
    for (std::size_t r = 0; r < options.reps; ++r) {
      const auto mask = random_mask(run.batch, pt.survivors, rng);
      const auto a = timed(*models.sharing, batch, mask, options.layout);
      const auto b = timed(*models.monolithic, batch, full, options.layout);
      const auto c = timed(*models.non_sharing, batch, mask, options.layout);
      t.push_back(a.seconds);
      tm.push_back(b.seconds);
      tns.push_back(c.seconds);
      pt.macs = a.macs;
      pt.macs_m = b.macs;
      pt.macs_ns = c.macs;
      pt.s2_conv_calls = a.calls - s1_convs;
    }
    pt.t = summarize(t);
    pt.t_m = summarize(tm);
    pt.t_ns = summarize(tns);
    run.points.push_back(pt);
  }
  set_num_threads(saved_threads);
  return run;
}

void emit_csv(const BenchRun& run, std::ostream& os) {
  os << "p,t_mean,t_se,tM_mean,tM_se,tNS_mean,tNS_se\n" << std::fixed << std::setprecision(6);
  for (const auto& pt : run.points)
    os << pt.p << ',' << pt.t.mean * 1e3 << ',' << pt.t.se * 1e3 << ',' << pt.t_m.mean * 1e3 << ',' << pt.t_m.se * 1e3
       << ',' << pt.t_ns.mean * 1e3 << ',' << pt.t_ns.se * 1e3 << '\n';
  os << std::defaultfloat;
}

void emit_csv(const BenchRun& run, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  emit_csv(run, f);
  if (!f) throw std::runtime_error("error writing " + path);
}

std::string host_description() {
  std::ostringstream s;
#if defined(__clang__)
  s << "clang " << __clang_major__ << '.' << __clang_minor__;
#elif defined(__GNUC__)
  s << "gcc " << __GNUC__ << '.' << __GNUC_MINOR__;
#else
  s << "unknown compiler";
#endif
#if defined(__linux__)
  s << ", linux";
#elif defined(__APPLE__)
  s << ", macos";
#endif
  s << ", " << std::thread::hardware_concurrency() << " hardware threads";
  return s.str();
}

void emit_metadata(const BenchRun& run, std::ostream& os) {
  nlohmann::ordered_json j;
  j["spec"] = run.spec;
  j["seed"] = run.seed;
  j["host"] = host_description();
  j["batch"] = run.batch;
  j["reps"] = run.reps;
  j["warmup"] = run.warmup;
  j["threads"] = run.threads;
  j["layout"] = run.layout == S2Layout::Compact ? "compact" : "row-by-row";
  j["timer_resolution_s"] = run.timer_resolution;
  j["time_unit"] = "ms";
  auto& pts = j["points"] = nlohmann::ordered_json::array();
  for (const auto& pt : run.points)
    pts.push_back({{"p", pt.p},
                   {"survivors", pt.survivors},
                   {"macs", pt.macs},
                   {"macs_monolithic", pt.macs_m},
                   {"macs_non_sharing", pt.macs_ns},
                   {"s2_conv_calls", pt.s2_conv_calls}});
  os << j.dump(2) << '\n';
}

}  // namespace onion
