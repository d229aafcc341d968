#include "onion/cascade.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace onion {

CascadeModel::CascadeModel(ArchSpec spec, std::vector<StageWeights> stages)
    : spec_(std::move(spec)), stages_(std::move(stages)) {}

std::vector<const Tensor*> CascadeModel::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& s : stages_) {
    if (s.s1) {
      out.push_back(&s.s1->filters);
      out.push_back(&s.s1->bias);
    }
    if (s.s2) {
      out.push_back(&s.s2->filters);
      out.push_back(&s.s2->bias);
    }
  }
  return out;
}

std::vector<Tensor*> CascadeModel::parameters() {
  std::vector<Tensor*> out;
  for (auto* p : std::as_const(*this).parameters()) out.push_back(const_cast<Tensor*>(p));
  return out;
}

std::size_t CascadeModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

namespace {

ConvWeights make_conv(std::size_t out, std::size_t in, std::size_t k, std::mt19937_64& rng) {
  ConvWeights w;
  w.filters = Tensor({out, in, k, k});
  w.bias = Tensor({out});
  w.filters_velocity = Tensor(w.filters.shape());
  w.bias_velocity = Tensor(w.bias.shape());
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(in * k * k)));
  for (auto& v : w.filters.data()) v = dist(rng);
  return w;
}

ConvParams params_of(const ConvStage& s) { return {s.pad, s.stride}; }

void require_unit_spatial(const Tensor& t, const char* what) {
  if (t.dim(2) != 1 || t.dim(3) != 1)
    throw ShapeError(std::string(what) + " must produce 1x1 maps, got " + to_string(t.shape()));
}

void add_into(Tensor& acc, const Tensor& g) {
  if (g.rank() == 0) return;
  if (acc.rank() == 0) {
    acc = g;
    return;
  }
  if (acc.shape() != g.shape()) throw ShapeError("gradient shape mismatch " + to_string(acc.shape()) + " vs " + to_string(g.shape()));
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

struct Var {
  Tensor value;
  bool live = false;
};

// Recorded S1-path operation for backprop.
struct S1Op {
  LayerKind kind = LayerKind::ReLU;
  std::size_t stage = 0;
  bool on_s1 = false, on_sh = false;
  Tensor in_s1, in_sh;
  std::vector<std::uint32_t> arg_s1, arg_sh;
  Shape shape_s1, shape_sh;
  bool fork = false;      // after the conv the shared maps equal the S1 output
  bool s1_final = false;  // conv output is the S1 score tensor
};

struct S2Op {
  LayerKind kind = LayerKind::ReLU;
  std::size_t stage = 0;
  Tensor in;
  std::vector<std::uint32_t> arg;
  Shape shape;
  std::size_t shared_c = 0;
};

using S1Trace = std::vector<S1Op>;
using S2Trace = std::vector<S2Op>;

void apply_unary(LayerKind kind, const SplitLayerSpec& l, Var& v, bool record, Tensor& in, std::vector<std::uint32_t>& arg,
                 Shape& shape) {
  if (!v.live) return;
  if (record) {
    shape = v.value.shape();
    if (kind == LayerKind::ReLU) in = v.value;
  }
  switch (kind) {
    case LayerKind::ReLU:
      v.value = relu(v.value);
      break;
    case LayerKind::MaxPool: {
      auto r = maxpool(v.value, {l.size, l.stride});
      v.value = std::move(r.output);
      if (record) arg = std::move(r.argmax);
      break;
    }
    case LayerKind::Flatten:
      v.value = flatten(v.value);
      break;
    default:
      break;
  }
}

Tensor unary_backward(LayerKind kind, const Tensor& g, const Tensor& in, const std::vector<std::uint32_t>& arg,
                      const Shape& shape) {
  if (g.rank() == 0) return g;
  switch (kind) {
    case LayerKind::ReLU: return relu_backward(g, in);
    case LayerKind::MaxPool: return maxpool_backward(g, arg, shape);
    case LayerKind::Flatten: return unflatten(g, shape);
    default: return g;
  }
}

S1Output forward_s1_impl(const CascadeModel& model, const Tensor& batch, S1Trace* trace,
                         std::vector<Tensor>* conv_maps = nullptr) {
  const auto& spec = model.spec();
  const auto& stages = model.stages();
  require_rank(batch, 4, "cascade input");
  if (batch.dim(1) != spec.input.channels)
    throw ShapeError("cascade input has " + std::to_string(batch.dim(1)) + " channels, spec expects " +
                     std::to_string(spec.input.channels));
  const bool sharing = spec.variant == Variant::Sharing;
  const bool record = trace != nullptr;

  S1Output out;
  out.shared.resize(stages.size());
  if (conv_maps) conv_maps->assign(stages.size(), Tensor());
  Var s1{batch, true};
  Var sh{batch, true};
  bool detached = false;
  std::size_t k = 0;
  for (const auto& l : spec.layers) {
    if (!s1.live && !sh.live) break;
    S1Op op;
    op.kind = l.kind;
    switch (l.kind) {
      case LayerKind::ReLU:
      case LayerKind::MaxPool:
      case LayerKind::Flatten:
        op.on_s1 = s1.live;
        apply_unary(l.kind, l, s1, record, op.in_s1, op.arg_s1, op.shape_s1);
        if (l.s1_only) {
          detached = true;
        } else {
          op.on_sh = sh.live;
          apply_unary(l.kind, l, sh, record, op.in_sh, op.arg_sh, op.shape_sh);
        }
        break;
      case LayerKind::Conv: {
        const auto& st = stages[k];
        op.stage = k;
        if (st.stage.s2_in_shared > 0) out.shared[k] = sh.value;
        if (st.s1) {
          if (record) op.in_s1 = s1.value;
          s1.value = conv_forward(s1.value, st.s1->filters, st.s1->bias.data(), params_of(st.stage));
          if (conv_maps) (*conv_maps)[k] = s1.value;
          if (st.stage.s1_final) {
            require_unit_spatial(s1.value, "the final S1 layer");
            out.scores = s1.value;
            op.s1_final = true;
          }
        } else {
          s1 = {};
        }
        if (sharing && st.s1 && !detached) {
          sh = s1;
          op.fork = true;
        } else {
          sh = {};
        }
        ++k;
        break;
      }
      case LayerKind::Residual:
        throw std::invalid_argument("residual blocks are not executable");
    }
    if (record) trace->push_back(std::move(op));
  }
  return out;
}

Tensor forward_s2_impl(const CascadeModel& model, const std::vector<Tensor>& shared, S2Trace* trace,
                       std::vector<Tensor>* conv_maps = nullptr) {
  const auto& spec = model.spec();
  const auto& stages = model.stages();
  const bool record = trace != nullptr;
  Var s2;
  std::size_t k = 0;
  if (conv_maps) conv_maps->assign(stages.size(), Tensor());
  for (const auto& l : spec.layers) {
    S2Op op;
    op.kind = l.kind;
    if (l.kind == LayerKind::Conv) {
      const auto& st = stages[k];
      op.stage = k;
      if (st.s2) {
        Tensor x;
        if (st.stage.s2_in_shared > 0) {
          if (shared[k].rank() == 0) throw ShapeError("missing shared S1 maps for stage " + std::to_string(k));
          x = st.stage.s2_in_own > 0 ? concat_channels(shared[k], s2.value) : shared[k];
        } else {
          x = s2.value;
        }
        op.shared_c = st.stage.s2_in_shared;
        s2.value = conv_forward(x, st.s2->filters, st.s2->bias.data(), params_of(st.stage));
        s2.live = true;
        if (conv_maps) (*conv_maps)[k] = s2.value;
        if (record) op.in = std::move(x);
      }
      ++k;
    } else if (l.kind == LayerKind::Residual) {
      throw std::invalid_argument("residual blocks are not executable");
    } else if (!l.s1_only) {
      apply_unary(l.kind, l, s2, record, op.in, op.arg, op.shape);
    }
    if (record) trace->push_back(std::move(op));
  }
  require_unit_spatial(s2.value, "the final S2 layer");
  return s2.value;
}

void backward_s2(const CascadeModel& model, const S2Trace& trace, Tensor g, std::vector<Tensor>& g_shared,
                 ModelGrads& grads) {
  const auto& stages = model.stages();
  for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
    const auto& op = *it;
    if (op.kind != LayerKind::Conv) {
      if (op.shape.empty()) continue;  // S2 was not live at this op
      g = unary_backward(op.kind, g, op.in, op.arg, op.shape);
      continue;
    }
    const auto& st = stages[op.stage];
    if (!st.s2) continue;
    const bool reads_s1 = op.shared_c > 0 && model.spec().variant == Variant::Sharing && op.stage > 0;
    const bool need_input = st.stage.s2_in_own > 0 || reads_s1;
    auto cg = conv_backward(g, op.in, st.s2->filters, params_of(st.stage), need_input);
    grads.s2[op.stage] = ConvWeights{std::move(cg.filters), Tensor({cg.bias.size()}, cg.bias), {}, {}};
    if (!need_input) {
      g = {};
      continue;
    }
    auto [gsh, gown] = split_channels(cg.input, op.shared_c);
    if (reads_s1) g_shared[op.stage] = std::move(gsh);
    g = std::move(gown);
  }
}

void backward_s1(const CascadeModel& model, const S1Trace& trace, const Tensor& g_scores,
                 const std::vector<Tensor>& g_shared, ModelGrads& grads) {
  const auto& stages = model.stages();
  Tensor g1, gsh;
  for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
    const auto& op = *it;
    if (op.kind != LayerKind::Conv) {
      if (op.on_s1) g1 = unary_backward(op.kind, g1, op.in_s1, op.arg_s1, op.shape_s1);
      if (op.on_sh) gsh = unary_backward(op.kind, gsh, op.in_sh, op.arg_sh, op.shape_sh);
      continue;
    }
    const auto& st = stages[op.stage];
    Tensor gout = std::move(g1);
    if (op.fork) add_into(gout, gsh);
    if (op.s1_final) add_into(gout, g_scores);
    g1 = {};
    if (st.s1) {
      const bool need_input = op.stage > 0;
      if (gout.rank() == 0) {
        grads.s1[op.stage] = ConvWeights{Tensor(st.s1->filters.shape()), Tensor(st.s1->bias.shape()), {}, {}};
      } else {
        auto cg = conv_backward(gout, op.in_s1, st.s1->filters, params_of(st.stage), need_input);
        grads.s1[op.stage] = ConvWeights{std::move(cg.filters), Tensor({cg.bias.size()}, cg.bias), {}, {}};
        if (need_input) g1 = std::move(cg.input);
      }
    }
    gsh = g_shared[op.stage];
  }
}

double scaled_loss(const LossResult& r, double scale, Tensor& grad) {
  grad = r.grad;
  for (auto& v : grad.data()) v = static_cast<float>(v * scale);
  return r.loss;
}

std::vector<int> hinge_labels(std::span<const int> labels) {
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw std::out_of_range("hinge head expects class ids 0 or 1, got " + std::to_string(labels[i]));
    y[i] = labels[i] == 1 ? 1 : -1;
  }
  return y;
}

LossResult s2_loss_of(const Tensor& scores, std::span<const int> labels, S2Loss kind) {
  if (kind == S2Loss::CrossEntropy) return cross_entropy(scores, labels);
  const auto y = hinge_labels(labels);
  return binary_hinge(scores, y);
}

ModelGrads empty_grads(const CascadeModel& model) {
  ModelGrads g;
  g.s1.resize(model.stages().size());
  g.s2.resize(model.stages().size());
  return g;
}

}  // namespace

CascadeModel build(const ArchSpec& spec, std::uint64_t seed) {
  validate(spec);
  if (spec.has_residual()) throw std::invalid_argument("build: residual blocks are supported by the cost model only");
  const auto trace = trace_stages(spec);
  std::mt19937_64 rng(seed);
  std::vector<StageWeights> stages;
  for (const auto& cs : trace) {
    StageWeights sw{cs, std::nullopt, std::nullopt};
    if (cs.s1_out > 0) sw.s1 = make_conv(cs.s1_out, cs.s1_in, cs.kernel, rng);
    if (cs.s2_out > 0) sw.s2 = make_conv(cs.s2_out, cs.s2_in(), cs.kernel, rng);
    stages.push_back(std::move(sw));
  }
  return CascadeModel(spec, std::move(stages));
}

S1Output forward_s1(const CascadeModel& model, const Tensor& batch) { return forward_s1_impl(model, batch, nullptr); }

Tensor forward_s2_dense(const CascadeModel& model, const std::vector<Tensor>& shared) {
  return forward_s2_impl(model, shared, nullptr);
}

S2Output forward_s2_shared(const CascadeModel& model, const Tensor& batch, S1Output& s1, const PassMask& mask,
                           S2Layout layout) {
  const std::size_t n = batch.batch();
  if (mask.size() != n)
    throw ShapeError("forward_s2_shared: mask length " + std::to_string(mask.size()) + " does not match batch " +
                     std::to_string(n));
  for (const auto& t : s1.shared)
    if (t.rank() != 0 && t.batch() != n) throw ShapeError("forward_s2_shared: shared maps do not match the batch");
  const std::size_t survivors = mask.count();
  const std::size_t k2 = model.spec().s2_class_count;
  if (survivors == 0) return {Tensor({0, k2, 1, 1}), {}};

  if (survivors == n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return {forward_s2_impl(model, s1.shared, nullptr), std::move(rows)};
  }

  if (layout == S2Layout::Compact) {
    const auto plan = plan_compaction(mask);
    std::vector<Tensor*> maps;
    for (auto& t : s1.shared)
      if (t.rank() != 0) maps.push_back(&t);
    auto gather = apply_plan(plan, maps);
    std::vector<Tensor> window(s1.shared.size());
    for (std::size_t k = 0; k < s1.shared.size(); ++k)
      if (s1.shared[k].rank() != 0) window[k] = s1.shared[k].rows(plan.window_start, plan.window_len);
    return {forward_s2_impl(model, window, nullptr), std::move(gather)};
  }

  S2Output out;
  std::vector<float> values;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    std::vector<Tensor> one(s1.shared.size());
    for (std::size_t k = 0; k < s1.shared.size(); ++k)
      if (s1.shared[k].rank() != 0) one[k] = s1.shared[k].rows(i, 1);
    const Tensor r = forward_s2_impl(model, one, nullptr);
    values.insert(values.end(), r.data().begin(), r.data().end());
    out.rows.push_back(i);
  }
  out.scores = Tensor({survivors, k2, 1, 1}, std::move(values));
  return out;
}

FeatureMaps feature_maps(const CascadeModel& model, const Tensor& batch) {
  FeatureMaps f;
  auto s1 = forward_s1_impl(model, batch, nullptr, &f.s1);
  forward_s2_impl(model, s1.shared, nullptr, &f.s2);
  return f;
}

Tensor s1_probabilities(const S1Output& s1) { return softmax(s1.scores); }

std::vector<int> s2_decisions(const Tensor& s2_scores) {
  const std::size_t n = s2_scores.batch(), k = s2_scores.row_size();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = s2_scores.row(i);
    if (k == 1) {
      out[i] = r[0] > 0.0f ? 1 : 0;
    } else {
      out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
  }
  return out;
}

std::pair<LossBreakdown, ModelGrads> compute_gradients(const CascadeModel& model, const Tensor& batch,
                                                       std::span<const int> s1_labels,
                                                       std::span<const int> s2_labels, double alpha,
                                                       S2Loss s2_loss) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("compute_gradients: alpha outside [0, 1]");
  const bool has_s1 = model.has_s1();
  const double w1 = has_s1 ? alpha : 0.0;
  const double w2 = has_s1 ? 1.0 - alpha : 1.0;

  S1Trace t1;
  auto s1 = forward_s1_impl(model, batch, &t1);
  S2Trace t2;
  const Tensor s2 = forward_s2_impl(model, s1.shared, &t2);

  LossBreakdown loss;
  Tensor g1, g2;
  if (has_s1) loss.s1 = scaled_loss(cross_entropy(s1.scores, s1_labels), w1, g1);
  loss.s2 = scaled_loss(s2_loss_of(s2, s2_labels, s2_loss), w2, g2);
  loss.total = w1 * loss.s1 + w2 * loss.s2;

  ModelGrads grads = empty_grads(model);
  std::vector<Tensor> g_shared(model.stages().size());
  backward_s2(model, t2, g2, g_shared, grads);
  if (has_s1) backward_s1(model, t1, g1, g_shared, grads);
  return {loss, std::move(grads)};
}

LossBreakdown evaluate_loss(const CascadeModel& model, const Tensor& batch, std::span<const int> s1_labels,
                            std::span<const int> s2_labels, double alpha, S2Loss s2_loss) {
  const bool has_s1 = model.has_s1();
  auto s1 = forward_s1_impl(model, batch, nullptr);
  const Tensor s2 = forward_s2_impl(model, s1.shared, nullptr);
  LossBreakdown loss;
  if (has_s1) loss.s1 = cross_entropy(s1.scores, s1_labels).loss;
  loss.s2 = s2_loss_of(s2, s2_labels, s2_loss).loss;
  loss.total = has_s1 ? alpha * loss.s1 + (1.0 - alpha) * loss.s2 : loss.s2;
  return loss;
}

void apply_gradients(CascadeModel& model, const ModelGrads& grads, const SgdConfig& sgd) {
  auto& stages = model.stages();
  auto step = [&](ConvWeights& w, const std::optional<ConvWeights>& g) {
    if (!g) return;
    sgd_step(w.filters.data(), g->filters.data(), w.filters_velocity.data(), sgd);
    sgd_step(w.bias.data(), g->bias.data(), w.bias_velocity.data(), sgd);
  };
  for (std::size_t k = 0; k < stages.size(); ++k) {
    if (stages[k].s1) step(*stages[k].s1, grads.s1[k]);
    if (stages[k].s2) step(*stages[k].s2, grads.s2[k]);
  }
}

LossBreakdown train_step(CascadeModel& model, const Tensor& batch, std::span<const int> s1_labels,
                         std::span<const int> s2_labels, const JointLossConfig& loss, const SgdConfig& sgd) {
  if (!(loss.alpha > 0.0 && loss.alpha < 1.0))
    throw std::invalid_argument("train_step: alpha must lie strictly between 0 and 1, got " + std::to_string(loss.alpha));
  auto [l, grads] = compute_gradients(model, batch, s1_labels, s2_labels, loss.alpha, loss.s2_loss);
  apply_gradients(model, grads, sgd);
  return l;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

InferenceResult finish_cascade(const CascadeModel& model, const Tensor& batch, S1Output& s1, PassMask mask,
                               S2Layout layout, double s1_seconds, std::uint64_t macs_before) {
  InferenceResult res;
  const auto t0 = Clock::now();
  const auto s2 = forward_s2_shared(model, batch, s1, mask, layout);
  res.stats.s2_seconds = seconds_since(t0);
  res.stats.s1_seconds = s1_seconds;
  res.predictions.assign(batch.batch(), kRejectLabel);
  const auto decisions = s2_decisions(s2.scores);
  for (std::size_t i = 0; i < decisions.size(); ++i) res.predictions[s2.rows[i]] = decisions[i];
  res.stats.pass_fraction = mask.pass_fraction();
  res.stats.macs = kernel_counters().conv_macs - macs_before;
  res.mask = std::move(mask);
  return res;
}

}  // namespace

InferenceResult infer_with_mask(const CascadeModel& model, const Tensor& batch, const PassMask& mask,
                                S2Layout layout) {
  const auto macs = kernel_counters().conv_macs;
  const auto t0 = Clock::now();
  auto s1 = forward_s1(model, batch);
  return finish_cascade(model, batch, s1, mask, layout, seconds_since(t0), macs);
}

InferenceResult infer_cascade(const CascadeModel& model, const Tensor& batch, const ThresholdSet& thresholds,
                              S2Layout layout) {
  const auto macs = kernel_counters().conv_macs;
  const auto t0 = Clock::now();
  auto s1 = forward_s1(model, batch);
  PassMask mask(batch.batch(), true);
  if (model.has_s1()) {
    if (thresholds.entries.empty())
      throw std::invalid_argument("infer_cascade: no thresholds for the S1 classes of interest");
    for (const auto& [cls, e] : thresholds.entries)
      if (cls < 0 || static_cast<std::size_t>(cls) >= model.spec().s1_class_count)
        throw std::invalid_argument("infer_cascade: threshold class " + std::to_string(cls) + " outside the " +
                                    std::to_string(model.spec().s1_class_count) + " S1 classes");
    mask = pass_mask(s1_probabilities(s1), thresholds);
  }
  const double s1_seconds = seconds_since(t0);
  return finish_cascade(model, batch, s1, std::move(mask), layout, s1_seconds, macs);
}

std::vector<std::vector<double>> class_mean_activations(const CascadeModel& model, const Tensor& images,
                                                        std::span<const int> s2_labels) {
  auto s1 = forward_s1_impl(model, images, nullptr);
  S2Trace t2;
  const Tensor scores = forward_s2_impl(model, s1.shared, &t2);
  const auto decisions = s2_decisions(scores);
  const Tensor* features = nullptr;
  for (auto it = t2.rbegin(); it != t2.rend(); ++it)
    if (it->kind == LayerKind::Conv && it->in.rank() != 0) {
      features = &it->in;
      break;
    }
  const std::size_t classes = std::max<std::size_t>(model.spec().s2_class_count, 2);
  const std::size_t d = features->row_size();
  std::vector<std::vector<double>> sum(classes, std::vector<double>(d, 0.0)), all(classes, std::vector<double>(d, 0.0));
  std::vector<std::size_t> n_ok(classes, 0), n_all(classes, 0);
  for (std::size_t i = 0; i < images.batch(); ++i) {
    const auto c = static_cast<std::size_t>(s2_labels[i]);
    if (c >= classes) throw std::out_of_range("class_mean_activations: label out of range");
    const auto row = features->row(i);
    for (std::size_t j = 0; j < d; ++j) all[c][j] += row[j];
    ++n_all[c];
    if (decisions[i] == s2_labels[i]) {
      for (std::size_t j = 0; j < d; ++j) sum[c][j] += row[j];
      ++n_ok[c];
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (n_ok[c] == 0) {
      sum[c] = all[c];
      n_ok[c] = n_all[c];
    }
    if (n_ok[c] == 0) continue;
    for (auto& v : sum[c]) v /= static_cast<double>(n_ok[c]);
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kMagic = "ONIONNET-CHECKPOINT";
constexpr int kVersion = 1;

void write_le(std::ostream& os, std::span<const float> values) {
  std::vector<unsigned char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) buf[i * 4 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(u >> (8 * b));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_le(std::istream& is, std::span<float> values) {
  std::vector<unsigned char> buf(values.size() * 4);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw std::runtime_error("checkpoint: truncated weight data");
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(buf[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
    values[i] = std::bit_cast<float>(u);
  }
}

}  // namespace

void save_checkpoint(const CascadeModel& model, std::ostream& os) {
  const auto params = model.parameters();
  os << kMagic << '\n' << "version " << kVersion << '\n' << "arch " << to_text(model.spec()) << '\n';
  os << "tensors " << params.size() << " floats " << model.parameter_count() << '\n';
  for (const auto* p : params) write_le(os, p->data());
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

CascadeModel load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic) throw std::runtime_error("checkpoint: bad magic");
  if (!std::getline(is, line) || line != "version " + std::to_string(kVersion))
    throw std::runtime_error("checkpoint: unsupported version line '" + line + "'");
  if (!std::getline(is, line) || line.rfind("arch ", 0) != 0) throw std::runtime_error("checkpoint: missing arch line");
  CascadeModel model = build(parse_arch(line.substr(5)), 0);
  if (!std::getline(is, line)) throw std::runtime_error("checkpoint: missing tensor header");
  std::istringstream hs(line);
  std::string w1, w2;
  std::size_t count = 0, floats = 0;
  hs >> w1 >> count >> w2 >> floats;
  auto params = model.parameters();
  if (w1 != "tensors" || w2 != "floats" || count != params.size() || floats != model.parameter_count())
    throw std::runtime_error("checkpoint: tensor header does not match the architecture");
  for (auto* p : params) read_le(is, p->data());
  return model;
}

void save_checkpoint(const CascadeModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint(model, os);
}

CascadeModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(is);
}

}  // namespace onion
