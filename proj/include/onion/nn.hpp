#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "onion/tensor.hpp"

namespace onion {

struct ConvParams {
  std::size_t pad = 0;
  std::size_t stride = 1;
};

struct PoolParams {
  std::size_t window = 2;
  std::size_t stride = 2;
};

// Output extent of a sliding window along one axis, or 0 if the window does
// not fit.
std::size_t window_extent(std::size_t in, std::size_t window, std::size_t pad, std::size_t stride);

// Global kernel instrumentation. Counters are process-wide and atomic; they
// count what the kernels execute, independently of the analytic cost model.
struct KernelCounters {
  std::uint64_t conv_macs = 0;
  std::uint64_t conv_calls = 0;
};
KernelCounters kernel_counters();
void reset_kernel_counters();

// Number of worker threads used to split convolutions over the batch.
// 1 (the default) keeps everything on the calling thread.
void set_num_threads(unsigned n);
unsigned num_threads();

// Convolution. Reductions accumulate in double and round once per output.
Tensor conv_forward(const Tensor& input, const Tensor& filters, std::span<const float> bias,
                    ConvParams params);

struct ConvGrads {
  Tensor input;
  Tensor filters;
  std::vector<float> bias;
};

ConvGrads conv_backward(const Tensor& grad_out, const Tensor& input, const Tensor& filters,
                        ConvParams params, bool need_input_grad = true);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

PoolResult maxpool(const Tensor& input, PoolParams params);
Tensor maxpool_backward(const Tensor& grad_out, std::span<const std::uint32_t> argmax,
                        const Shape& input_shape);

// N x C x H x W -> N x (C*H*W) x 1 x 1, and back.
Tensor flatten(const Tensor& x);
Tensor unflatten(const Tensor& x, const Shape& shape);

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // same shape as the scores
};

// Softmax over the K scores of each row (scores may be N x K or N x K x 1 x 1).
std::vector<double> softmax_row(std::span<const float> scores);
Tensor softmax(const Tensor& scores);

// Mean softmax cross-entropy; labels in [0, K).
LossResult cross_entropy(const Tensor& scores, std::span<const int> labels);

// Mean of max(0, 1 - y * score) over a single-output batch; labels in {-1, +1}.
LossResult binary_hinge(const Tensor& scores, std::span<const int> labels);

struct SgdConfig {
  float lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 0.0f;
};

// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity,
              const SgdConfig& cfg);

}  // namespace onion
