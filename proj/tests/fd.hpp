// Central finite-difference checks. Numerical derivatives are taken on the
// double-precision oracles; analytic gradients come from the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "onion/cascade.hpp"
#include "onion/nn.hpp"
#include "oracles.hpp"
#include "spec_gen.hpp"

namespace fd {

struct Result {
  double worst = 0.0;  // largest relative error seen
  std::size_t checked = 0;
};

// Relative error with a small magnitude floor so components that are zero in
// both gradients do not divide by zero.
inline double rel_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline void update(Result& r, double analytic, double numeric, double floor = 1e-3) {
  r.worst = std::max(r.worst, rel_error(analytic, numeric, floor));
  ++r.checked;
}

inline double central(std::vector<double>& x, std::size_t i, double h, const std::function<double()>& f) {
  const double saved = x[i];
  x[i] = saved + h;
  const double up = f();
  x[i] = saved - h;
  const double down = f();
  x[i] = saved;
  return (up - down) / (2.0 * h);
}

inline double dot(const oracle::DTensor& a, const oracle::DTensor& w) {
  return std::inner_product(a.v.begin(), a.v.end(), w.v.begin(), 0.0);
}

// L = sum(w * conv(x)); checks dL/dx, dL/df and dL/db.
inline Result check_conv(std::mt19937_64& rng, int trial, double h = 1e-3) {
  const std::size_t n = 1 + trial % 2, ci = 1 + trial % 3, co = 1 + (trial / 2) % 3;
  const std::size_t hgt = 4 + trial % 3, k = 1 + trial % 3, pad = trial % 2, stride = 1 + (trial / 3) % 2;
  const onion::Tensor x = oracle::random_tensor({n, ci, hgt, hgt + 1}, rng);
  const onion::Tensor f = oracle::random_tensor({co, ci, k, k}, rng);
  const onion::Tensor b = oracle::random_tensor({co}, rng);
  const onion::Tensor y = onion::conv_forward(x, f, b.data(), {pad, stride});
  const onion::Tensor w = oracle::random_tensor(y.shape(), rng);
  const auto g = onion::conv_backward(w, x, f, {pad, stride});

  oracle::DTensor dx(x), df(f), dw(w);
  std::vector<double> db(b.data().begin(), b.data().end());
  auto loss = [&] { return dot(oracle::conv(dx, df, db, pad, stride), dw); };
  Result r;
  for (std::size_t i = 0; i < dx.v.size(); ++i) update(r, g.input[i], central(dx.v, i, h, loss));
  for (std::size_t i = 0; i < df.v.size(); ++i) update(r, g.filters[i], central(df.v, i, h, loss));
  for (std::size_t i = 0; i < db.size(); ++i) update(r, g.bias[i], central(db, i, h, loss));
  return r;
}

// Inputs kept at least 0.05 away from the kink.
inline Result check_relu(std::mt19937_64& rng, double h = 1e-3) {
  onion::Tensor x = oracle::random_tensor({2, 3, 4, 4}, rng);
  for (auto& v : x.data()) v = v < 0 ? v - 0.05f : v + 0.05f;
  const onion::Tensor w = oracle::random_tensor(x.shape(), rng);
  const onion::Tensor g = onion::relu_backward(w, x);
  oracle::DTensor dx(x), dw(w);
  auto loss = [&] { return dot(oracle::relu(dx), dw); };
  Result r;
  for (std::size_t i = 0; i < dx.v.size(); ++i) update(r, g[i], central(dx.v, i, h, loss));
  return r;
}

// Distinct input values spaced 0.01 apart so no perturbation changes a max.
inline Result check_maxpool(std::mt19937_64& rng, int trial, double h = 1e-3) {
  const std::size_t window = 2 + trial % 2, stride = 1 + trial % 2;
  onion::Tensor x({2, 2, 6, 7});
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01f * static_cast<float>(perm[i]) - 0.5f;
  const auto fwd = onion::maxpool(x, {window, stride});
  const onion::Tensor w = oracle::random_tensor(fwd.output.shape(), rng);
  const onion::Tensor g = onion::maxpool_backward(w, fwd.argmax, x.shape());
  oracle::DTensor dx(x), dw(w);
  auto loss = [&] { return dot(oracle::maxpool(dx, window, stride).out, dw); };
  Result r;
  for (std::size_t i = 0; i < dx.v.size(); ++i) update(r, g[i], central(dx.v, i, h, loss));
  return r;
}

inline Result check_flatten(std::mt19937_64& rng, double h = 1e-3) {
  const onion::Tensor x = oracle::random_tensor({2, 3, 2, 3}, rng);
  const onion::Tensor w = oracle::random_tensor({2, 18, 1, 1}, rng);
  const onion::Tensor g = onion::unflatten(w, x.shape());
  oracle::DTensor dx(x), dw(w);
  auto loss = [&] { return dot(oracle::flatten(dx), dw); };
  Result r;
  for (std::size_t i = 0; i < dx.v.size(); ++i) update(r, g[i], central(dx.v, i, h, loss));
  return r;
}

inline Result check_cross_entropy(std::mt19937_64& rng, double h = 1e-3) {
  const std::size_t n = 5, k = 2 + rng() % 4;
  const onion::Tensor s = oracle::random_tensor({n, k, 1, 1}, rng, -3.0f, 3.0f);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng() % k);
  const auto res = onion::cross_entropy(s, y);
  oracle::DTensor ds(s);
  auto loss = [&] { return oracle::cross_entropy(ds, y); };
  Result r;
  for (std::size_t i = 0; i < ds.v.size(); ++i) update(r, res.grad[i], central(ds.v, i, h, loss), 1e-4);
  return r;
}

// Scores kept away from the hinge point y * s = 1.
inline Result check_hinge(std::mt19937_64& rng, double h = 1e-3) {
  const std::size_t n = 8;
  onion::Tensor s = oracle::random_tensor({n, 1, 1, 1}, rng, -2.0f, 2.0f);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng() % 2 ? 1 : -1;
    if (std::abs(1.0f - static_cast<float>(y[i]) * s[i]) < 0.05f) s[i] += 0.2f;
  }
  const auto res = onion::binary_hinge(s, y);
  oracle::DTensor ds(s);
  auto loss = [&] { return oracle::hinge(ds, y); };
  Result r;
  for (std::size_t i = 0; i < ds.v.size(); ++i) update(r, res.grad[i], central(ds.v, i, h, loss), 1e-4);
  return r;
}

// Joint loss alpha * CE(S1) + (1 - alpha) * CE(S2) of a random sharing
// cascade; `samples` weights drawn across all parameter tensors. Biases are
// randomised: with the zero initialisation a unit whose receptive field is
// all zeros (dead ReLUs upstream) sits exactly on its ReLU kink.
inline Result check_cascade(std::mt19937_64& rng, std::size_t samples = 40, double h = 1e-6) {
  gen::Options o;
  o.max_size = 7;
  const onion::ArchSpec spec = gen::sharing_spec(rng, o);
  onion::CascadeModel model = onion::build(spec, rng());
  std::uniform_real_distribution<float> bias(-0.5f, 0.5f);
  for (auto& st : model.stages())
    for (auto* w : {&st.s1, &st.s2})
      if (*w)
        for (auto& b : (*w)->bias.data()) b = bias(rng);
  const std::size_t n = 3;
  const onion::Tensor x = oracle::random_tensor({n, spec.input.channels, spec.input.height, spec.input.width}, rng);
  std::vector<int> y1(n), y2(n);
  for (std::size_t i = 0; i < n; ++i) {
    y1[i] = static_cast<int>(rng() % spec.s1_class_count);
    y2[i] = static_cast<int>(rng() % spec.s2_class_count);
  }
  const double alpha = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
  const auto [loss_value, grads] =
      onion::compute_gradients(model, x, y1, y2, alpha, onion::S2Loss::CrossEntropy);
  (void)loss_value;

  // Analytic gradients flattened in parameter declaration order.
  std::vector<std::vector<double>> analytic;
  for (std::size_t k = 0; k < model.stages().size(); ++k) {
    for (const auto* g : {&grads.s1[k], &grads.s2[k]}) {
      if (!*g) continue;
      analytic.emplace_back((*g)->filters.data().begin(), (*g)->filters.data().end());
      analytic.emplace_back((*g)->bias.data().begin(), (*g)->bias.data().end());
    }
  }
  auto weights = oracle::weights_of(model);
  if (analytic.size() != weights.size()) throw std::logic_error("fd: gradient / parameter layout mismatch");
  const oracle::DTensor dx(x);
  auto loss = [&] {
    const auto f = oracle::cascade(model, dx, weights);
    return alpha * oracle::cross_entropy(f.s1_scores, y1) + (1.0 - alpha) * oracle::cross_entropy(f.s2_scores, y2);
  };
  Result r;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t t = rng() % weights.size();
    const std::size_t i = rng() % weights[t].size();
    update(r, analytic[t][i], central(weights[t], i, h, loss));
  }
  return r;
}

}  // namespace fd
