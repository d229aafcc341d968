#include "onion/arch.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include "onion/nn.hpp"

namespace onion {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Monolithic: return "monolithic";
    case Variant::Sharing: return "sharing";
    case Variant::NonSharing: return "non-sharing";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view text) {
  if (text == "monolithic") return Variant::Monolithic;
  if (text == "sharing") return Variant::Sharing;
  if (text == "non-sharing") return Variant::NonSharing;
  return std::nullopt;
}

std::size_t ArchSpec::conv_count() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(),
                                                [](const auto& l) { return l.is_conv_like(); }));
}

std::size_t ArchSpec::s1_depth() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(),
                                                [](const auto& l) { return l.is_conv_like() && l.n_s1 > 0; }));
}

std::size_t ArchSpec::s2_depth() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(),
                                                [](const auto& l) { return l.is_conv_like() && l.n_s2 > 0; }));
}

bool ArchSpec::has_residual() const {
  return std::any_of(layers.begin(), layers.end(), [](const auto& l) { return l.kind == LayerKind::Residual; });
}

namespace {

std::string count_text(std::size_t n) { return n == 0 ? "-" : std::to_string(n); }

std::string layer_text(const SplitLayerSpec& l, Variant v) {
  std::string t;
  switch (l.kind) {
    case LayerKind::ReLU: return "R";
    case LayerKind::Flatten: return "F";
    case LayerKind::MaxPool:
      t = "P" + std::to_string(l.size);
      if (l.stride != l.size) t += "s" + std::to_string(l.stride);
      if (l.s1_only) t += "(1/-)";
      return t;
    case LayerKind::Conv:
    case LayerKind::Residual:
      t = (l.kind == LayerKind::Conv ? "C" : "B") + std::to_string(l.size) + "(";
      t += v == Variant::Monolithic ? std::to_string(l.n_s2) : count_text(l.n_s1) + "/" + count_text(l.n_s2);
      t += ")";
      if (l.stride != 1) t += "s" + std::to_string(l.stride);
      if (l.kind == LayerKind::Conv && l.pad != 0) t += "p" + std::to_string(l.pad);
      return t;
  }
  return "?";
}

std::string strip_spaces(std::string_view s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

std::size_t to_count(const std::string& s, const std::string& token) {
  try {
    std::size_t pos = 0;
    const unsigned long v = std::stoul(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(token, "expected a number, got '" + s + "'");
  }
}

void assign_class_counts(ArchSpec& spec) {
  spec.s1_class_count = 0;
  spec.s2_class_count = 0;
  for (const auto& l : spec.layers) {
    if (!l.is_conv_like()) continue;
    if (l.n_s1 > 0) spec.s1_class_count = l.n_s1;
    if (l.n_s2 > 0) spec.s2_class_count = l.n_s2;
  }
}

}  // namespace

ArchSpec parse_arch(std::string_view text) {
  static const std::regex conv_re(R"(^([CB])(\d+)\(([^)]*)\)(?:s(\d+))?(?:p(\d+))?$)");
  static const std::regex pool_re(R"(^P(\d+)(?:s(\d+))?(\(1/-\))?$)");
  static const std::regex rep_re(R"(^(\d+)(?:x|X|\xC3\x97)(.+)$)");
  static const std::regex pair_re(R"(^(\d+|-)/(\d+|-)$)");
  static const std::regex single_re(R"(^(\d+)$)");
  static const std::regex input_re(R"(^in=(\d+)(?:x(\d+)x(\d+))?$)");

  ArchSpec spec;
  std::optional<Variant> tag;
  bool any_pair = false;
  std::vector<bool> single_form;  // per layer: conv count written without '/'

  // Comments run from '#' to end of line. A line break also separates tokens
  // unless the line already ends with a comma.
  std::string cleaned;
  {
    std::stringstream lines{std::string(text)};
    std::string line;
    while (std::getline(lines, line)) {
      line = strip_spaces(line.substr(0, line.find('#')));
      if (line.empty()) continue;
      if (!cleaned.empty() && cleaned.back() != ',') cleaned += ',';
      cleaned += line;
    }
  }

  std::stringstream ss(cleaned);
  std::string raw;
  bool first = true;
  while (std::getline(ss, raw, ',')) {
    std::string tok = strip_spaces(raw);
    if (tok.empty()) throw ParseError(raw, "empty token");
    std::smatch m;
    if (tok[0] == '@') {
      if (!first || tag) throw ParseError(tok, "variant tag must be the first token");
      tag = parse_variant(std::string_view(tok).substr(1));
      if (!tag) throw ParseError(tok, "unknown variant");
      continue;
    }
    first = false;
    if (std::regex_match(tok, m, input_re)) {
      if (!spec.layers.empty()) throw ParseError(tok, "input shape must precede all layers");
      spec.input.channels = to_count(m[1], tok);
      if (m[2].matched) {
        spec.input.height = to_count(m[2], tok);
        spec.input.width = to_count(m[3], tok);
      }
      if (spec.input.channels == 0 || (m[2].matched && (spec.input.height == 0 || spec.input.width == 0)))
        throw ParseError(tok, "input extents must be positive");
      continue;
    }
    std::size_t repeat = 1;
    std::string body = tok;
    if (std::regex_match(tok, m, rep_re)) {
      repeat = to_count(m[1], tok);
      body = m[2];
      if (repeat == 0) throw ParseError(tok, "repetition count must be positive");
    }
    SplitLayerSpec layer;
    bool single = false;
    if (body == "R") {
      layer.kind = LayerKind::ReLU;
    } else if (body == "F") {
      layer.kind = LayerKind::Flatten;
    } else if (std::regex_match(body, m, pool_re)) {
      layer.kind = LayerKind::MaxPool;
      layer.size = to_count(m[1], tok);
      layer.stride = m[2].matched ? to_count(m[2], tok) : layer.size;
      layer.s1_only = m[3].matched;
      if (layer.size == 0 || layer.stride == 0) throw ParseError(tok, "pool window and stride must be >= 1");
    } else if (std::regex_match(body, m, conv_re)) {
      layer.kind = m[1] == "C" ? LayerKind::Conv : LayerKind::Residual;
      layer.size = to_count(m[2], tok);
      layer.stride = m[4].matched ? to_count(m[4], tok) : 1;
      if (layer.kind == LayerKind::Residual) {
        if (m[5].matched) throw ParseError(tok, "residual blocks use implicit padding");
        layer.pad = layer.size / 2;
      } else {
        layer.pad = m[5].matched ? to_count(m[5], tok) : 0;
      }
      if (layer.size == 0) throw ParseError(tok, "filter size must be >= 1");
      if (layer.stride == 0) throw ParseError(tok, "stride must be >= 1");
      const std::string inner = m[3];
      std::smatch cm;
      if (std::regex_match(inner, cm, pair_re)) {
        any_pair = true;
        layer.n_s1 = cm[1] == "-" ? 0 : to_count(cm[1], tok);
        layer.n_s2 = cm[2] == "-" ? 0 : to_count(cm[2], tok);
        if (layer.n_s1 + layer.n_s2 == 0) throw ParseError(tok, "zero-width pair");
        if ((cm[1] != "-" && layer.n_s1 == 0) || (cm[2] != "-" && layer.n_s2 == 0))
          throw ParseError(tok, "use '-' for an absent half, not 0");
      } else if (std::regex_match(inner, cm, single_re)) {
        single = true;
        layer.n_s2 = to_count(cm[1], tok);
        if (layer.n_s2 == 0) throw ParseError(tok, "zero-width layer");
      } else {
        throw ParseError(tok, "malformed filter counts");
      }
    } else {
      throw ParseError(tok, "malformed token");
    }
    for (std::size_t r = 0; r < repeat; ++r) {
      spec.layers.push_back(layer);
      single_form.push_back(single);
    }
  }

  spec.variant = tag.value_or(any_pair ? Variant::Sharing : Variant::Monolithic);
  if (spec.variant != Variant::Monolithic) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      if (single_form[i]) {
        spec.layers[i].n_s1 = spec.layers[i].n_s2;
        spec.layers[i].n_s2 = 0;
      }
    }
  } else if (any_pair) {
    throw ParseError("@monolithic", "monolithic specs cannot use the (a/b) pair form");
  }
  validate(spec);
  assign_class_counts(spec);
  return spec;
}

void validate(const ArchSpec& spec) {
  const Variant v = spec.variant;
  auto fail = [&](const SplitLayerSpec& l, const std::string& msg) { throw ParseError(layer_text(l, v), msg); };
  if (spec.input.channels == 0) throw ParseError("in=0", "input must have at least one channel");

  std::vector<std::size_t> convs;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.is_conv_like()) {
      convs.push_back(i);
      if (l.size == 0 || l.stride == 0) fail(l, "filter size and stride must be >= 1");
      if (l.n_s1 + l.n_s2 == 0) fail(l, "zero-width pair");
      if (v == Variant::Monolithic && (l.n_s1 != 0 || l.n_s2 == 0))
        fail(l, "monolithic layers carry a single width");
    } else if (l.kind == LayerKind::MaxPool) {
      if (l.size == 0 || l.stride == 0) fail(l, "pool window and stride must be >= 1");
      if (l.s1_only && v == Variant::Monolithic) fail(l, "S1-only pooling in a monolithic spec");
    }
  }
  if (convs.empty()) throw ParseError("", "spec has no convolutional layer");
  if (!spec.layers.back().is_conv_like() || spec.layers.back().kind != LayerKind::Conv)
    fail(spec.layers.back(), "layer list must end with a plain convolution (the output layer)");

  if (v != Variant::Monolithic) {
    const auto& first = spec.layers[convs.front()];
    if (first.n_s1 == 0) fail(first, "S1 must start at the first layer");
    std::size_t s1_end = 0;  // position in convs of the last S1 layer
    std::optional<std::size_t> s2_start;
    bool s1_done = false;
    for (std::size_t k = 0; k < convs.size(); ++k) {
      const auto& l = spec.layers[convs[k]];
      if (l.n_s1 > 0) {
        if (s1_done) fail(l, "non-contiguous stage: S1 resumes after ending");
        s1_end = k;
      } else {
        s1_done = true;
      }
      if (l.n_s2 > 0) {
        if (!s2_start) s2_start = k;
      } else if (s2_start) {
        fail(l, "non-contiguous stage: S2 stops before the output layer");
      }
      if (v == Variant::NonSharing && l.n_s2 == 0) fail(l, "non-sharing S2 must be present at every layer");
    }
    if (!s2_start || *s2_start > s1_end)
      fail(spec.layers[convs[std::min(s1_end + 1, convs.size() - 1)]],
           "S2 must begin no later than the final S1 layer");
    const auto& s1_last = spec.layers[convs[s1_end]];
    if (s1_last.kind != LayerKind::Conv) fail(s1_last, "the final S1 layer must be a plain convolution");
    const std::size_t lo = s1_end == 0 ? 0 : convs[s1_end - 1];
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& l = spec.layers[i];
      if (l.kind == LayerKind::MaxPool && l.s1_only && (i < lo || i > convs[s1_end]))
        fail(l, "S1-only pooling must sit directly before the final S1 convolution");
    }
  }
}

std::string to_text(const ArchSpec& spec) {
  std::string out;
  auto append = [&](const std::string& t) {
    if (!out.empty()) out += ", ";
    out += t;
  };
  if (spec.variant == Variant::NonSharing) append("@non-sharing");
  if (spec.input != InputShape{}) {
    std::string t = "in=" + std::to_string(spec.input.channels);
    if (spec.input.height > 0)
      t += "x" + std::to_string(spec.input.height) + "x" + std::to_string(spec.input.width);
    append(t);
  }
  for (const auto& l : spec.layers) append(layer_text(l, spec.variant));
  return out;
}

ArchVariants derive_variants(const ArchSpec& spec) {
  if (spec.variant != Variant::Sharing)
    throw std::invalid_argument("derive_variants: expected a sharing spec, got " + std::string(to_string(spec.variant)));
  ArchVariants out{spec, spec, spec};
  out.monolithic.variant = Variant::Monolithic;
  out.monolithic.layers.clear();
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::MaxPool && l.s1_only) continue;
    auto m = l;
    if (m.is_conv_like()) {
      m.n_s2 = l.n_s1 + l.n_s2;
      m.n_s1 = 0;
    }
    out.monolithic.layers.push_back(m);
  }
  out.non_sharing.variant = Variant::NonSharing;
  for (auto& l : out.non_sharing.layers)
    if (l.is_conv_like()) l.n_s2 = l.n_s1 + l.n_s2;
  assign_class_counts(out.monolithic);
  assign_class_counts(out.non_sharing);
  return out;
}

// ---------------------------------------------------------------------------
// Stage trace

namespace {

struct Maps {
  std::size_t c = 0, h = 0, w = 0;
  bool live = false;
};

struct TraceState {
  Maps s1;       // S1's running maps (the raw input before the first conv)
  Maps shared;   // what the next S2 convolution may read from S1
  Maps s2;
  bool detached = false;     // an S1-only pool has been applied
};

void pool_maps(Maps& m, const SplitLayerSpec& l, bool spatial, Variant v) {
  if (!m.live || !spatial) return;
  if (l.size > m.h || l.size > m.w)
    throw ParseError(layer_text(l, v), "pooling window exceeds " + std::to_string(m.h) + "x" + std::to_string(m.w) +
                                            " maps");
  m.h = window_extent(m.h, l.size, 0, l.stride);
  m.w = window_extent(m.w, l.size, 0, l.stride);
}

}  // namespace

std::vector<ConvStage> trace_stages(const ArchSpec& spec) { return trace_stages(spec, spec.input); }

std::vector<ConvStage> trace_stages(const ArchSpec& spec, const InputShape& input) {
  const Variant v = spec.variant;
  const bool spatial = input.height > 0 && input.width > 0;
  const bool sharing = v == Variant::Sharing;
  const std::size_t d1 = spec.s1_depth();

  TraceState st;
  st.s1 = {input.channels, input.height, input.width, true};
  st.shared = st.s1;
  st.s2 = {0, input.height, input.width, false};

  std::vector<ConvStage> stages;
  std::size_t s1_seen = 0;

  // One convolution over the current state; updates the state unless `dry`.
  auto conv = [&](std::size_t li, const SplitLayerSpec& l, std::size_t kernel, std::size_t stride, std::size_t pad,
                  TraceState& s, bool residual) {
    ConvStage cs;
    cs.layer = li;
    cs.kernel = kernel;
    cs.stride = stride;
    cs.pad = pad;
    cs.residual = residual;
    const std::size_t shared_c = s.shared.live ? s.shared.c : 0;
    auto out_extent = [&](const Maps& in, std::size_t& oh, std::size_t& ow) {
      if (!spatial) return;
      oh = window_extent(in.h, kernel, pad, stride);
      ow = window_extent(in.w, kernel, pad, stride);
      if (oh == 0 || ow == 0)
        throw ParseError(layer_text(l, v), "spatial size collapses to zero (input " + std::to_string(in.h) + "x" +
                                               std::to_string(in.w) + ")");
    };
    if (l.n_s2 > 0) {
      cs.s2_in_shared = shared_c;
      cs.s2_in_own = s.s2.live ? s.s2.c : 0;
      cs.s2_out = l.n_s2;
      if (cs.s2_in() == 0) throw ParseError(layer_text(l, v), "S2 layer has no input maps");
      if (spatial && shared_c > 0 && cs.s2_in_own > 0 && (s.shared.h != s.s2.h || s.shared.w != s.s2.w))
        throw ParseError(layer_text(l, v), "shared S1 maps and S2 maps differ in spatial size");
      out_extent(shared_c > 0 ? s.shared : s.s2, cs.s2_height, cs.s2_width);
    }
    if (l.n_s1 > 0) {
      cs.s1_in = s.s1.c;
      cs.s1_out = l.n_s1;
      out_extent(s.s1, cs.s1_height, cs.s1_width);
    }
    if (l.n_s2 > 0) s.s2 = {cs.s2_out, cs.s2_height, cs.s2_width, true};
    if (l.n_s1 > 0) {
      s.s1 = {cs.s1_out, cs.s1_height, cs.s1_width, true};
    } else {
      s.s1.live = false;
    }
    if (sharing && l.n_s1 > 0 && !s.detached) {
      s.shared = s.s1;
    } else {
      s.shared.live = false;
    }
    return cs;
  };

  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const auto& l = spec.layers[li];
    switch (l.kind) {
      case LayerKind::ReLU:
        break;
      case LayerKind::MaxPool:
        pool_maps(st.s1, l, spatial, v);
        if (l.s1_only) {
          st.detached = true;
        } else {
          pool_maps(st.shared, l, spatial, v);
          pool_maps(st.s2, l, spatial, v);
        }
        break;
      case LayerKind::Flatten: {
        if (!spatial) throw ParseError("F", "flatten needs a known input height and width");
        for (Maps* m : {&st.s1, &st.shared, &st.s2}) {
          if (!m->live) continue;
          m->c *= m->h * m->w;
          m->h = m->w = 1;
        }
        break;
      }
      case LayerKind::Conv: {
        auto cs = conv(li, l, l.size, l.stride, l.pad, st, false);
        if (l.n_s1 > 0) cs.s1_final = ++s1_seen == d1;
        stages.push_back(cs);
        break;
      }
      case LayerKind::Residual: {
        if (l.n_s1 > 0) ++s1_seen;
        const TraceState before = st;
        auto a = conv(li, l, l.size, l.stride, l.size / 2, st, true);
        auto b = conv(li, l, l.size, 1, l.size / 2, st, true);
        stages.push_back(a);
        stages.push_back(b);
        // Projection shortcut when the block changes stride or width.
        const bool s1_proj = l.n_s1 > 0 && (l.stride != 1 || before.s1.c != l.n_s1);
        const bool s2_proj = l.n_s2 > 0 && (l.stride != 1 || !before.s2.live || before.s2.c != l.n_s2);
        if (s1_proj || s2_proj) {
          TraceState tmp = before;
          SplitLayerSpec pl = l;
          pl.n_s1 = s1_proj ? l.n_s1 : 0;
          pl.n_s2 = s2_proj ? l.n_s2 : 0;
          stages.push_back(conv(li, pl, 1, l.stride, 0, tmp, true));
        }
        break;
      }
    }
  }
  return stages;
}

}  // namespace onion
