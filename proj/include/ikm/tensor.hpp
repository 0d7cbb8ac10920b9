#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <new>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ikm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or layout contract violated by the caller.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values showed up where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

template <Real T>
struct DtypeTraits;

template <>
struct DtypeTraits<float> {
  static constexpr std::uint8_t code = 0;
  static constexpr const char* name = "f32";
};

template <>
struct DtypeTraits<double> {
  static constexpr std::uint8_t code = 1;
  static constexpr const char* name = "f64";
};

// 64-byte aligned storage. Vectorised kernels choose their peeling from the
// buffer address, so alignment must not depend on the allocator's mood for
// results to be bitwise reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major tensor. 4-D tensors are laid out batch, channel, height,
/// width.
template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  Tensor(Shape shape, const std::vector<T>& values)
      : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (data_.size() != element_count(shape_))
      throw ShapeError("tensor buffer of " + std::to_string(data_.size()) +
                       " elements does not match shape " + to_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size())
      throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                       to_string(shape_));
    return shape_[axis];
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h,
              std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Reinterprets the buffer under a new shape with the same element count.
  void reshape(Shape shape) {
    if (element_count(shape) != data_.size())
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " +
                       to_string(shape));
    shape_ = std::move(shape);
  }

  Tensor reshaped(Shape shape) const& {
    Tensor t = *this;
    t.reshape(std::move(shape));
    return t;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

// Batch/channel/height/width extents of a rank-4 tensor.
struct Dims4 {
  std::size_t n, c, h, w;
  std::size_t plane() const noexcept { return h * w; }
  std::size_t image() const noexcept { return c * h * w; }
};

template <Real T>
Dims4 dims4(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4)
    throw ShapeError(std::string(what) + ": expected rank-4 tensor, got " +
                     to_string(t.shape()));
  const auto& s = t.shape();
  return {s[0], s[1], s[2], s[3]};
}

template <Real T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <Real U, Real T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
  std::vector<U> v(t.values().begin(), t.values().end());
  return Tensor<U>(t.shape(), std::move(v));
}

// y += x
template <Real T>
void add_inplace(Tensor<T>& y, const Tensor<T>& x) {
  require_same_shape(y, x, "add_inplace");
  T* yd = y.data();
  const T* xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) yd[i] += xd[i];
}

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  add_inplace(out, b);
  return out;
}

template <Real T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "subtract");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

template <Real T>
void scale_inplace(Tensor<T>& t, T factor) {
  for (auto& v : t.values()) v *= factor;
}

template <Real T>
T sum(const Tensor<T>& t) {
  T s = 0;
  for (T v : t.values()) s += v;
  return s;
}

template <Real T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "dot");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <Real T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <Real T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](T v) { return std::isfinite(v); });
}

// Copies channels [begin, end) of a rank-4 tensor.
template <Real T>
Tensor<T> channel_slice(const Tensor<T>& x, std::size_t begin,
                        std::size_t end) {
  const Dims4 d = dims4(x, "channel_slice");
  if (begin > end || end > d.c)
    throw ShapeError("channel_slice: range out of bounds");
  const std::size_t cs = end - begin;
  Tensor<T> out({d.n, cs, d.h, d.w});
  for (std::size_t n = 0; n < d.n; ++n)
    std::copy_n(x.data() + n * d.image() + begin * d.plane(), cs * d.plane(),
                out.data() + n * cs * d.plane());
  return out;
}

// dst[:, begin:begin+src.c] += src
template <Real T>
void add_to_channels(Tensor<T>& dst, const Tensor<T>& src, std::size_t begin) {
  const Dims4 d = dims4(dst, "add_to_channels");
  const Dims4 s = dims4(src, "add_to_channels");
  if (s.n != d.n || s.h != d.h || s.w != d.w || begin + s.c > d.c)
    throw ShapeError("add_to_channels: incompatible shapes " +
                     to_string(src.shape()) + " into " +
                     to_string(dst.shape()));
  for (std::size_t n = 0; n < d.n; ++n) {
    T* o = dst.data() + n * d.image() + begin * d.plane();
    const T* i = src.data() + n * s.image();
    for (std::size_t k = 0; k < s.image(); ++k) o[k] += i[k];
  }
}

// dst[:, begin:begin+src.c] = src
template <Real T>
void write_channels(Tensor<T>& dst, const Tensor<T>& src, std::size_t begin) {
  const Dims4 d = dims4(dst, "write_channels");
  const Dims4 s = dims4(src, "write_channels");
  if (s.n != d.n || s.h != d.h || s.w != d.w || begin + s.c > d.c)
    throw ShapeError("write_channels: incompatible shapes " +
                     to_string(src.shape()) + " into " +
                     to_string(dst.shape()));
  for (std::size_t n = 0; n < d.n; ++n)
    std::copy_n(src.data() + n * s.image(), s.image(),
                dst.data() + n * d.image() + begin * d.plane());
}

// Copies image n of a rank-4 tensor out as a 1xCxHxW tensor.
template <Real T>
Tensor<T> batch_item(const Tensor<T>& x, std::size_t n) {
  const Dims4 d = dims4(x, "batch_item");
  if (n >= d.n) throw ShapeError("batch_item: index out of range");
  Tensor<T> out({1, d.c, d.h, d.w});
  std::copy_n(x.data() + n * d.image(), d.image(), out.data());
  return out;
}

// Stacks equally shaped 1xCxHxW (or CxHxW) tensors along the batch axis.
template <Real T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  Shape inner = items.front().shape();
  if (inner.size() == 4) {
    if (inner[0] != 1) throw ShapeError("stack_batch: items must have batch 1");
    inner.erase(inner.begin());
  }
  if (inner.size() != 3) throw ShapeError("stack_batch: items must be CxHxW");
  const std::size_t per = element_count(inner);
  Tensor<T> out({items.size(), inner[0], inner[1], inner[2]});
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].size() != per)
      throw ShapeError("stack_batch: item " + std::to_string(i) +
                       " has mismatched shape");
    std::copy_n(items[i].data(), per, out.data() + i * per);
  }
  return out;
}

}  // namespace ikm
