#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace onion {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

// Dense row-major float tensor. Activations are laid out N x C x H x W and
// filters Cout x Cin x s x s. The leading (batch) extent may be zero so that
// a fully rejected batch has a representation; every other extent is >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessors (no bounds checks beyond the debug assert).
  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  // Batch helpers: the leading extent is the batch.
  std::size_t batch() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_size() const noexcept;
  std::span<float> row(std::size_t i);
  std::span<const float> row(std::size_t i) const;
  Tensor rows(std::size_t start, std::size_t count) const;
  Tensor gather_rows(std::span<const std::size_t> indices) const;

  Tensor reshaped(Shape shape) const;
  void fill(float value);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

std::size_t element_count(const Shape& shape);

// Channel-axis concatenation of two N x C x H x W tensors; either side may
// have zero channels (represented by an empty tensor).
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Inverse of concat_channels: the first `first` channels and the remainder.
std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t first);

void require_rank(const Tensor& t, std::size_t rank, const char* what);

}  // namespace onion
