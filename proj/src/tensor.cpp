#include "onion/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>
#include <sstream>

namespace onion {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return shape.empty() ? 0 : n;
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (std::size_t i = 1; i < shape.size(); ++i) {
    if (shape[i] == 0)
      throw ShapeError("tensor extent " + std::to_string(i) + " is zero in " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (element_count(shape_) != data_.size())
    throw ShapeError("shape " + to_string(shape_) + " needs " + std::to_string(element_count(shape_)) +
                     " values, got " + std::to_string(data_.size()));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape_));
  return shape_[axis];
}

float& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  assert(shape_.size() == 4);
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

float Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  assert(shape_.size() == 4);
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

std::size_t Tensor::row_size() const noexcept {
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
  return n;
}

std::span<float> Tensor::row(std::size_t i) {
  const auto rs = row_size();
  return std::span<float>(data_).subspan(i * rs, rs);
}

std::span<const float> Tensor::row(std::size_t i) const {
  const auto rs = row_size();
  return std::span<const float>(data_).subspan(i * rs, rs);
}

Tensor Tensor::rows(std::size_t start, std::size_t count) const {
  if (start + count > batch())
    throw ShapeError("row range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") exceeds batch " + std::to_string(batch()));
  Shape s = shape_;
  s[0] = count;
  const auto rs = row_size();
  std::vector<float> d(data_.begin() + static_cast<std::ptrdiff_t>(start * rs),
                       data_.begin() + static_cast<std::ptrdiff_t>((start + count) * rs));
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  Shape s = shape_;
  s[0] = indices.size();
  Tensor out(std::move(s));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= batch()) throw ShapeError("gather index out of range");
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size())
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     to_string(t.shape()));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.empty() && a.rank() == 0) return b;
  if (b.empty() && b.rank() == 0) return a;
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = out.row(i);
    auto ra = a.row(i);
    auto rb = b.row(i);
    std::copy(ra.begin(), ra.end(), dst.begin());
    std::copy(rb.begin(), rb.end(), dst.begin() + static_cast<std::ptrdiff_t>(ca * hw));
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t first) {
  require_rank(t, 4, "split_channels");
  const std::size_t n = t.dim(0), c = t.dim(1), hw = t.dim(2) * t.dim(3);
  if (first > c) throw ShapeError("split_channels: split point beyond channel count");
  Tensor a, b;
  if (first > 0) a = Tensor({n, first, t.dim(2), t.dim(3)});
  if (first < c) b = Tensor({n, c - first, t.dim(2), t.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    auto src = t.row(i);
    if (first > 0) std::copy_n(src.begin(), first * hw, a.row(i).begin());
    if (first < c)
      std::copy(src.begin() + static_cast<std::ptrdiff_t>(first * hw), src.end(), b.row(i).begin());
  }
  return {std::move(a), std::move(b)};
}

}  // namespace onion
