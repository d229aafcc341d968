#include "onion/cost_model.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "onion/nn.hpp"

namespace onion {

namespace {

std::uint64_t s1_macs(const ConvStage& s) {
  return static_cast<std::uint64_t>(s.s1_in) * s.kernel * s.kernel * s.s1_out * s.s1_height * s.s1_width;
}

std::uint64_t s2_macs(const ConvStage& s) {
  return static_cast<std::uint64_t>(s.s2_in()) * s.kernel * s.kernel * s.s2_out * s.s2_height * s.s2_width;
}

std::uint64_t s1_params(const ConvStage& s) {
  return s.s1_out == 0 ? 0 : static_cast<std::uint64_t>(s.s1_in) * s.kernel * s.kernel * s.s1_out + s.s1_out;
}

std::uint64_t s2_params(const ConvStage& s) {
  return s.s2_out == 0 ? 0 : static_cast<std::uint64_t>(s.s2_in()) * s.kernel * s.kernel * s.s2_out + s.s2_out;
}

// Monolithic, sharing and non-sharing forms of any accepted spec.
ArchVariants variants_of(const ArchSpec& spec) {
  switch (spec.variant) {
    case Variant::Sharing:
      return derive_variants(spec);
    case Variant::Monolithic:
      return {spec, spec, spec};
    case Variant::NonSharing: {
      ArchSpec mono = spec;
      mono.variant = Variant::Monolithic;
      mono.layers.clear();
      for (auto l : spec.layers) {
        if (l.kind == LayerKind::MaxPool && l.s1_only) continue;
        l.n_s1 = 0;
        mono.layers.push_back(l);
      }
      mono.s1_class_count = 0;
      return {mono, spec, spec};
    }
  }
  throw std::logic_error("unknown variant");
}

struct Dims {
  std::uint64_t c = 0, h = 0, w = 0;
  bool live = false;
};

// Pooling / ReLU element operations per stage branch.
std::pair<std::uint64_t, std::uint64_t> pool_relu_ops(const ArchSpec& spec, const std::vector<ConvStage>& trace,
                                                       const InputShape& input) {
  Dims s1{input.channels, input.height, input.width, spec.variant != Variant::Monolithic};
  Dims s2;
  std::uint64_t ops1 = 0, ops2 = 0;
  std::size_t k = 0;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::ReLU:
        if (s1.live) ops1 += s1.c * s1.h * s1.w;
        if (s2.live) ops2 += s2.c * s2.h * s2.w;
        break;
      case LayerKind::MaxPool: {
        auto pool = [&](Dims& d, std::uint64_t& ops) {
          if (!d.live) return;
          d.h = window_extent(d.h, l.size, 0, l.stride);
          d.w = window_extent(d.w, l.size, 0, l.stride);
          ops += d.c * d.h * d.w * l.size * l.size;
        };
        pool(s1, ops1);
        if (!l.s1_only) pool(s2, ops2);
        break;
      }
      case LayerKind::Flatten:
        for (Dims* d : {&s1, &s2}) {
          d->c *= d->h * d->w;
          d->h = d->w = 1;
        }
        break;
      case LayerKind::Conv:
      case LayerKind::Residual:
        while (k < trace.size() && trace[k].layer == static_cast<std::size_t>(&l - spec.layers.data())) {
          const auto& s = trace[k++];
          if (s.s1_out > 0) s1 = {s.s1_out, s.s1_height, s.s1_width, true};
          else s1.live = false;
          if (s.s2_out > 0) s2 = {s.s2_out, s.s2_height, s.s2_width, true};
        }
        break;
    }
  }
  return {ops1, ops2};
}

}  // namespace

CostReport mac_count(const ArchSpec& spec, const InputShape& input, const CostOptions& options) {
  if (input.height == 0 || input.width == 0 || input.channels == 0)
    throw std::invalid_argument("mac_count: input extents must be positive");
  const auto v = variants_of(spec);
  const auto ts = trace_stages(v.sharing, input);
  const auto tm = trace_stages(v.monolithic, input);
  const auto tn = trace_stages(v.non_sharing, input);
  if (ts.size() != tm.size() || ts.size() != tn.size()) throw std::logic_error("mac_count: variant traces differ in depth");

  CostReport r;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    StageCost c;
    c.layer = ts[i].layer;
    c.height = tm[i].s2_height;
    c.width = tm[i].s2_width;
    c.monolithic = s2_macs(tm[i]);
    c.s1 = s1_macs(ts[i]);
    c.s2_shared = s2_macs(ts[i]);
    c.s2_non_sharing = s2_macs(tn[i]);
    r.cost_m += c.monolithic;
    r.cost_s1 += c.s1;
    r.cost_s2_shared += c.s2_shared;
    r.cost_s2_ns += c.s2_non_sharing;
    r.stages.push_back(c);
  }
  if (options.include_pool_relu) {
    const auto [s1_ops, s2_ops] = pool_relu_ops(v.sharing, ts, input);
    const auto [m1_ops, m2_ops] = pool_relu_ops(v.monolithic, tm, input);
    const auto [n1_ops, n2_ops] = pool_relu_ops(v.non_sharing, tn, input);
    (void)m1_ops;
    (void)n1_ops;
    r.cost_s1 += s1_ops;
    r.cost_s2_shared += s2_ops;
    r.cost_m += m2_ops;
    r.cost_s2_ns += n2_ops;
  }
  r.params = param_count(spec);
  r.d1 = v.sharing.s1_depth();
  r.d2 = v.sharing.s2_depth();
  return r;
}

ParamCounts param_count(const ArchSpec& spec) {
  const auto v = variants_of(spec);
  const bool flat = std::any_of(spec.layers.begin(), spec.layers.end(),
                                [](const auto& l) { return l.kind == LayerKind::Flatten; });
  InputShape in = spec.input;
  if (!flat) in.height = in.width = 0;
  ParamCounts p;
  for (const auto& s : trace_stages(v.monolithic, in)) p.monolithic += s2_params(s);
  for (const auto& s : trace_stages(v.sharing, in)) {
    p.s1 += s1_params(s);
    p.s2_shared += s2_params(s);
  }
  for (const auto& s : trace_stages(v.non_sharing, in)) p.s2_non_sharing += s2_params(s);
  return p;
}

CostCurve curves(const CostReport& report, std::span<const double> p_grid) {
  CostCurve c;
  const double s1 = static_cast<double>(report.cost_s1);
  const double m = static_cast<double>(report.cost_m);
  // Without an S1 nothing is rejected: every example runs the full network.
  const bool cascade = report.d1 > 0;
  for (double p : p_grid) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("curves: p must lie in [0, 1]");
    const double q = cascade ? p : 1.0;
    c.p.push_back(p);
    c.t.push_back(s1 + q * static_cast<double>(report.cost_s2_shared));
    c.t_m.push_back(m);
    c.t_ns.push_back(s1 + q * static_cast<double>(report.cost_s2_ns));
  }
  c.crossover = m > 0.0 ? 1.0 - s1 / m : 0.0;
  return c;
}

std::vector<double> uniform_grid(std::size_t points) {
  std::vector<double> g;
  if (points == 1) return {0.0};
  for (std::size_t i = 0; i < points; ++i) g.push_back(static_cast<double>(i) / static_cast<double>(points - 1));
  return g;
}

void write_curve_csv(const CostCurve& curve, std::ostream& os) {
  os << "p,t,t_M,t_NS\n" << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < curve.p.size(); ++i)
    os << curve.p[i] << ',' << curve.t[i] << ',' << curve.t_m[i] << ',' << curve.t_ns[i] << '\n';
  os << "crossover_p," << curve.crossover << ",,\n";
  os << std::defaultfloat;
}

}  // namespace onion
