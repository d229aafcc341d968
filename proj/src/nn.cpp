#include "onion/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace onion {

namespace {

std::atomic<std::uint64_t> g_conv_macs{0};
std::atomic<std::uint64_t> g_conv_calls{0};
std::atomic<unsigned> g_threads{1};

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, s, ho, wo;
  std::size_t k() const { return cin * s * s; }
  std::size_t p() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& filters, ConvParams params) {
  require_rank(input, 4, "conv input");
  require_rank(filters, 4, "conv filters");
  if (params.stride == 0) throw ShapeError("conv: stride must be >= 1");
  if (filters.dim(2) != filters.dim(3))
    throw ShapeError("conv: filters must be square, got " + to_string(filters.shape()));
  if (input.dim(1) != filters.dim(1))
    throw ShapeError("conv: input has " + std::to_string(input.dim(1)) + " channels but filters expect " +
                     std::to_string(filters.dim(1)) + " (input " + to_string(input.shape()) + ", filters " +
                     to_string(filters.shape()) + ")");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), filters.dim(0), filters.dim(2), 0, 0};
  g.ho = window_extent(g.h, g.s, params.pad, params.stride);
  g.wo = window_extent(g.w, g.s, params.pad, params.stride);
  if (g.ho == 0 || g.wo == 0)
    throw ShapeError("conv: " + std::to_string(g.s) + "x" + std::to_string(g.s) + " filter does not fit input " +
                     to_string(input.shape()) + " with pad " + std::to_string(params.pad));
  return g;
}

// col[k][p], k = (ic, kh, kw), p = (oh, ow); padded taps are zero.
void im2col(const float* img, const ConvGeometry& g, ConvParams params, std::vector<float>& col) {
  const std::size_t P = g.p();
  col.assign(g.k() * P, 0.0f);
  for (std::size_t ic = 0; ic < g.cin; ++ic) {
    for (std::size_t kh = 0; kh < g.s; ++kh) {
      for (std::size_t kw = 0; kw < g.s; ++kw) {
        float* dst = col.data() + ((ic * g.s + kh) * g.s + kw) * P;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * params.stride + kh) -
                                    static_cast<std::ptrdiff_t>(params.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const float* src = img + (ic * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * params.stride + kw) -
                                      static_cast<std::ptrdiff_t>(params.pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dst[oh * g.wo + ow] = src[iw];
          }
        }
      }
    }
  }
}

void col2im_add(const std::vector<double>& gcol, const ConvGeometry& g, ConvParams params, float* img) {
  const std::size_t P = g.p();
  for (std::size_t ic = 0; ic < g.cin; ++ic) {
    for (std::size_t kh = 0; kh < g.s; ++kh) {
      for (std::size_t kw = 0; kw < g.s; ++kw) {
        const double* src = gcol.data() + ((ic * g.s + kh) * g.s + kw) * P;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * params.stride + kh) -
                                    static_cast<std::ptrdiff_t>(params.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          float* dst = img + (ic * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * params.stride + kw) -
                                      static_cast<std::ptrdiff_t>(params.pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dst[iw] += static_cast<float>(src[oh * g.wo + ow]);
          }
        }
      }
    }
  }
}

template <typename Fn>
void for_each_image(std::size_t n, Fn&& fn) {
  const unsigned t = std::min<std::size_t>(g_threads.load(), n);
  if (t <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> workers;
  const std::size_t chunk = (n + t - 1) / t;
  for (std::size_t begin = 0; begin < n; begin += chunk)
    workers.emplace_back([&fn, begin, end = std::min(n, begin + chunk)] { fn(begin, end); });
}

}  // namespace

std::size_t window_extent(std::size_t in, std::size_t window, std::size_t pad, std::size_t stride) {
  if (stride == 0 || in + 2 * pad < window) return 0;
  return (in + 2 * pad - window) / stride + 1;
}

KernelCounters kernel_counters() { return {g_conv_macs.load(), g_conv_calls.load()}; }

void reset_kernel_counters() {
  g_conv_macs = 0;
  g_conv_calls = 0;
}

void set_num_threads(unsigned n) { g_threads = std::max(1u, n); }
unsigned num_threads() { return g_threads.load(); }

Tensor conv_forward(const Tensor& input, const Tensor& filters, std::span<const float> bias,
                    ConvParams params) {
  const auto g = conv_geometry(input, filters, params);
  if (bias.size() != g.cout)
    throw ShapeError("conv: bias has " + std::to_string(bias.size()) + " entries for " + std::to_string(g.cout) +
                     " filters");
  Tensor out({g.n, g.cout, g.ho, g.wo});
  g_conv_calls.fetch_add(1);
  g_conv_macs.fetch_add(static_cast<std::uint64_t>(g.n) * g.cout * g.k() * g.p());

  const std::size_t K = g.k(), P = g.p();
  for_each_image(g.n, [&](std::size_t begin, std::size_t end) {
    std::vector<float> col;
    std::vector<double> acc(P);
    for (std::size_t i = begin; i < end; ++i) {
      im2col(input.row(i).data(), g, params, col);
      float* dst = out.row(i).data();
      for (std::size_t oc = 0; oc < g.cout; ++oc) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* w = filters.data().data() + oc * K;
        for (std::size_t k = 0; k < K; ++k) {
          const double wk = w[k];
          const float* c = col.data() + k * P;
          for (std::size_t p = 0; p < P; ++p) acc[p] += wk * static_cast<double>(c[p]);
        }
        const double b = bias[oc];
        for (std::size_t p = 0; p < P; ++p) dst[oc * P + p] = static_cast<float>(acc[p] + b);
      }
    }
  });
  return out;
}

ConvGrads conv_backward(const Tensor& grad_out, const Tensor& input, const Tensor& filters,
                        ConvParams params, bool need_input_grad) {
  const auto g = conv_geometry(input, filters, params);
  require_rank(grad_out, 4, "conv grad_out");
  if (grad_out.shape() != Shape{g.n, g.cout, g.ho, g.wo})
    throw ShapeError("conv_backward: grad_out " + to_string(grad_out.shape()) + " does not match forward output " +
                     to_string(Shape{g.n, g.cout, g.ho, g.wo}));
  const std::size_t K = g.k(), P = g.p();
  ConvGrads grads;
  if (need_input_grad) grads.input = Tensor(input.shape());
  std::vector<double> gw(g.cout * K, 0.0), gb(g.cout, 0.0);
  std::vector<float> col;
  std::vector<double> gcol;
  for (std::size_t i = 0; i < g.n; ++i) {
    im2col(input.row(i).data(), g, params, col);
    const float* go = grad_out.row(i).data();
    for (std::size_t oc = 0; oc < g.cout; ++oc) {
      const float* gr = go + oc * P;
      double sb = 0.0;
      for (std::size_t p = 0; p < P; ++p) sb += gr[p];
      gb[oc] += sb;
      for (std::size_t k = 0; k < K; ++k) {
        const float* c = col.data() + k * P;
        double s = 0.0;
        for (std::size_t p = 0; p < P; ++p) s += static_cast<double>(gr[p]) * c[p];
        gw[oc * K + k] += s;
      }
    }
    if (need_input_grad) {
      gcol.assign(K * P, 0.0);
      for (std::size_t oc = 0; oc < g.cout; ++oc) {
        const float* gr = go + oc * P;
        const float* w = filters.data().data() + oc * K;
        for (std::size_t k = 0; k < K; ++k) {
          const double wk = w[k];
          double* dst = gcol.data() + k * P;
          for (std::size_t p = 0; p < P; ++p) dst[p] += wk * gr[p];
        }
      }
      col2im_add(gcol, g, params, grads.input.row(i).data());
    }
  }
  grads.filters = Tensor(filters.shape());
  for (std::size_t j = 0; j < gw.size(); ++j) grads.filters[j] = static_cast<float>(gw[j]);
  grads.bias.resize(g.cout);
  for (std::size_t j = 0; j < g.cout; ++j) grads.bias[j] = static_cast<float>(gb[j]);
  return grads;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  if (grad_out.shape() != input.shape()) throw ShapeError("relu_backward: shape mismatch");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(input[i] > 0.0f)) g[i] = 0.0f;
  return g;
}

PoolResult maxpool(const Tensor& input, PoolParams params) {
  require_rank(input, 4, "maxpool input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (params.window == 0 || params.stride == 0) throw ShapeError("maxpool: window and stride must be >= 1");
  if (params.window > h || params.window > w)
    throw ShapeError("maxpool: window " + std::to_string(params.window) + " exceeds spatial extent of " +
                     to_string(input.shape()));
  const std::size_t ho = window_extent(h, params.window, 0, params.stride);
  const std::size_t wo = window_extent(w, params.window, 0, params.stride);
  PoolResult r{Tensor({n, c, ho, wo}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::size_t arg = 0;
          for (std::size_t kh = 0; kh < params.window; ++kh)
            for (std::size_t kw = 0; kw < params.window; ++kw) {
              const std::size_t idx = ((b * c + ch) * h + oh * params.stride + kh) * w + ow * params.stride + kw;
              if (input[idx] > best || (kh == 0 && kw == 0)) {
                best = input[idx];
                arg = idx;
              }
            }
          r.output[o] = best;
          r.argmax[o] = static_cast<std::uint32_t>(arg);
        }
  return r;
}

Tensor maxpool_backward(const Tensor& grad_out, std::span<const std::uint32_t> argmax, const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool_backward: argmax/grad size mismatch");
  Tensor g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= g.size()) throw ShapeError("maxpool_backward: argmax out of range");
    g[argmax[i]] += grad_out[i];
  }
  return g;
}

Tensor flatten(const Tensor& x) {
  require_rank(x, 4, "flatten");
  return x.reshaped({x.dim(0), x.row_size(), 1, 1});
}

Tensor unflatten(const Tensor& x, const Shape& shape) { return x.reshaped(shape); }

std::vector<double> softmax_row(std::span<const float> scores) {
  std::vector<double> p(scores.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (float s : scores) mx = std::max(mx, static_cast<double>(s));
  double z = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) z += (p[k] = std::exp(scores[k] - mx));
  for (auto& v : p) v /= z;
  return p;
}

Tensor softmax(const Tensor& scores) {
  Tensor out = scores;
  for (std::size_t i = 0; i < scores.batch(); ++i) {
    const auto p = softmax_row(scores.row(i));
    auto dst = out.row(i);
    for (std::size_t k = 0; k < p.size(); ++k) dst[k] = static_cast<float>(p[k]);
  }
  return out;
}

LossResult cross_entropy(const Tensor& scores, std::span<const int> labels) {
  const std::size_t n = scores.batch(), k = scores.row_size();
  if (labels.size() != n)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " + std::to_string(n));
  LossResult r{0.0, Tensor(scores.shape())};
  if (n == 0) return r;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                              std::to_string(k) + ")");
    const auto p = softmax_row(scores.row(i));
    const auto y = static_cast<std::size_t>(labels[i]);
    r.loss -= std::log(std::max(p[y], std::numeric_limits<double>::min()));
    auto g = r.grad.row(i);
    for (std::size_t j = 0; j < k; ++j)
      g[j] = static_cast<float>((p[j] - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
  }
  r.loss /= static_cast<double>(n);
  return r;
}

LossResult binary_hinge(const Tensor& scores, std::span<const int> labels) {
  const std::size_t n = scores.batch();
  if (n > 0 && scores.row_size() != 1)
    throw ShapeError("binary_hinge: expects one score per example, got " + to_string(scores.shape()));
  if (labels.size() != n)
    throw ShapeError("binary_hinge: " + std::to_string(labels.size()) + " labels for batch " + std::to_string(n));
  LossResult r{0.0, Tensor(scores.shape())};
  if (n == 0) return r;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 1 && labels[i] != -1)
      throw std::out_of_range("binary_hinge: label " + std::to_string(labels[i]) + " is not -1 or +1");
    const double margin = 1.0 - labels[i] * static_cast<double>(scores[i]);
    if (margin > 0.0) {
      r.loss += margin;
      r.grad[i] = static_cast<float>(-labels[i] / static_cast<double>(n));
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity,
              const SgdConfig& cfg) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw ShapeError("sgd_step: parameter, gradient and velocity sizes differ");
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grad[i] + cfg.weight_decay * param[i];
    param[i] -= cfg.lr * velocity[i];
  }
}

}  // namespace onion
