#include "ikm/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace ikm {
namespace {

template <Real T>
using RowMajorMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <Real T>
using ConstRowMajorMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Per-group problem description shared by the forward and backward kernels.
struct ConvShape {
  std::size_t c_in, h, w;
  std::size_t c_out, kh, kw;
  std::size_t oh, ow;
  ConvGeometry g;

  std::size_t rows() const { return c_in * kh * kw; }
  std::size_t cols() const { return oh * ow; }
  bool is_pointwise() const {
    return kh == 1 && kw == 1 && g.stride == 1 && g.padding == 0;
  }
};

// Output columns [lo, hi) whose tap kj lands inside the input row.
struct ValidSpan {
  std::size_t lo, hi;
};

ValidSpan valid_span(const ConvShape& s, std::size_t k, std::size_t in,
                     std::size_t out) {
  const auto off = static_cast<std::ptrdiff_t>(k * s.g.dilation) -
                   static_cast<std::ptrdiff_t>(s.g.padding);
  const auto st = static_cast<std::ptrdiff_t>(s.g.stride);
  const auto n = static_cast<std::ptrdiff_t>(in);
  // smallest o with o*st + off >= 0, smallest o with o*st + off >= n
  auto first_at_least = [&](std::ptrdiff_t bound) {
    const std::ptrdiff_t v = bound - off;
    return v <= 0 ? std::ptrdiff_t{0} : (v + st - 1) / st;
  };
  const auto o = static_cast<std::ptrdiff_t>(out);
  const std::ptrdiff_t lo = std::min(first_at_least(0), o);
  const std::ptrdiff_t hi = std::max(std::min(first_at_least(n), o), lo);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <Real T>
void im2col(const T* x, const ConvShape& s, T* col) {
  for (std::size_t ki = 0; ki < s.kh; ++ki) {
    const ValidSpan ys = valid_span(s, ki, s.h, s.oh);
    for (std::size_t kj = 0; kj < s.kw; ++kj) {
      const ValidSpan xs = valid_span(s, kj, s.w, s.ow);
      for (std::size_t ci = 0; ci < s.c_in; ++ci) {
        const T* plane = x + ci * s.h * s.w;
        T* row = col + ((ci * s.kh + ki) * s.kw + kj) * s.cols();
        std::fill_n(row, ys.lo * s.ow, T(0));
        for (std::size_t oy = ys.lo; oy < ys.hi; ++oy) {
          const std::size_t iy = oy * s.g.stride + ki * s.g.dilation - s.g.padding;
          const T* in = plane + iy * s.w;
          T* out = row + oy * s.ow;
          std::fill_n(out, xs.lo, T(0));
          const auto base = static_cast<std::ptrdiff_t>(kj * s.g.dilation) -
                            static_cast<std::ptrdiff_t>(s.g.padding);
          if (s.g.stride == 1) {
            std::copy_n(in + (static_cast<std::ptrdiff_t>(xs.lo) + base),
                        xs.hi - xs.lo, out + xs.lo);
          } else {
            for (std::size_t ox = xs.lo; ox < xs.hi; ++ox)
              out[ox] = in[static_cast<std::ptrdiff_t>(ox * s.g.stride) + base];
          }
          std::fill(out + xs.hi, out + s.ow, T(0));
        }
        std::fill(row + ys.hi * s.ow, row + s.cols(), T(0));
      }
    }
  }
}

// Scatter-adds a column matrix back onto an image (adjoint of im2col).
template <Real T>
void col2im(const T* col, const ConvShape& s, T* x) {
  for (std::size_t ki = 0; ki < s.kh; ++ki) {
    const ValidSpan ys = valid_span(s, ki, s.h, s.oh);
    for (std::size_t kj = 0; kj < s.kw; ++kj) {
      const ValidSpan xs = valid_span(s, kj, s.w, s.ow);
      const auto base = static_cast<std::ptrdiff_t>(kj * s.g.dilation) -
                        static_cast<std::ptrdiff_t>(s.g.padding);
      for (std::size_t ci = 0; ci < s.c_in; ++ci) {
        T* plane = x + ci * s.h * s.w;
        const T* row = col + ((ci * s.kh + ki) * s.kw + kj) * s.cols();
        for (std::size_t oy = ys.lo; oy < ys.hi; ++oy) {
          const std::size_t iy = oy * s.g.stride + ki * s.g.dilation - s.g.padding;
          T* out = plane + iy * s.w;
          const T* in = row + oy * s.ow;
          for (std::size_t ox = xs.lo; ox < xs.hi; ++ox)
            out[static_cast<std::ptrdiff_t>(ox * s.g.stride) + base] += in[ox];
        }
      }
    }
  }
}

template <Real T>
void forward_image(const T* x, const T* w, const T* bias, T* y,
                   const ConvShape& s, AlignedVector<T>& col) {
  const T* cols = x;
  if (!s.is_pointwise()) {
    col.resize(s.rows() * s.cols());
    im2col(x, s, col.data());
    cols = col.data();
  }
  ConstRowMajorMap<T> wm(w, s.c_out, s.rows());
  ConstRowMajorMap<T> cm(cols, s.rows(), s.cols());
  RowMajorMap<T> ym(y, s.c_out, s.cols());
  ym.noalias() = wm * cm;
  if (bias)
    for (std::size_t j = 0; j < s.c_out; ++j) ym.row(j).array() += bias[j];
}

// gx is overwritten, gw and gb are overwritten.
template <Real T>
void backward_image(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb,
                    const ConvShape& s, AlignedVector<T>& col,
                    AlignedVector<T>& gcol) {
  const T* cols = x;
  if (!s.is_pointwise()) {
    col.resize(s.rows() * s.cols());
    im2col(x, s, col.data());
    cols = col.data();
  }
  ConstRowMajorMap<T> wm(w, s.c_out, s.rows());
  ConstRowMajorMap<T> cm(cols, s.rows(), s.cols());
  ConstRowMajorMap<T> gym(gy, s.c_out, s.cols());
  RowMajorMap<T> gwm(gw, s.c_out, s.rows());
  gwm.noalias() = gym * cm.transpose();
  for (std::size_t j = 0; j < s.c_out; ++j) gb[j] = gym.row(j).sum();
  if (s.is_pointwise()) {
    RowMajorMap<T> gxm(gx, s.rows(), s.cols());
    gxm.noalias() = wm.transpose() * gym;
    return;
  }
  gcol.resize(s.rows() * s.cols());
  RowMajorMap<T> gcm(gcol.data(), s.rows(), s.cols());
  gcm.noalias() = wm.transpose() * gym;
  std::fill_n(gx, s.c_in * s.h * s.w, T(0));
  col2im(gcol.data(), s, gx);
}

void check_geometry(const ConvGeometry& g) {
  if (g.stride == 0) throw ShapeError("convolution stride must be positive");
  if (g.dilation == 0)
    throw ShapeError("convolution dilation must be positive");
}

template <Real T>
ConvShape group_shape(const Tensor<T>& x, const Tensor<T>& weights,
                      const ConvGeometry& g, std::size_t groups,
                      const char* what) {
  check_geometry(g);
  const Dims4 xd = dims4(x, what);
  const Dims4 wd = dims4(weights, what);
  if (groups == 0) throw ShapeError(std::string(what) + ": zero groups");
  if (xd.c % groups != 0 || wd.n % groups != 0)
    throw ShapeError(std::string(what) + ": channel counts " +
                     std::to_string(xd.c) + "/" + std::to_string(wd.n) +
                     " not divisible by " + std::to_string(groups) +
                     " groups");
  if (xd.c / groups != wd.c)
    throw ShapeError(std::string(what) + ": input has " +
                     std::to_string(xd.c / groups) +
                     " channels per group, kernels expect " +
                     std::to_string(wd.c));
  ConvShape s{xd.c / groups, xd.h, xd.w, wd.n / groups, wd.h, wd.w, 0, 0, g};
  s.oh = conv_output_extent(xd.h, wd.h, g);
  s.ow = conv_output_extent(xd.w, wd.w, g);
  return s;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               const ConvGeometry& g) {
  check_geometry(g);
  const std::size_t span = receptive_extent(kernel, g.dilation);
  if (in + 2 * g.padding < span)
    throw ShapeError("convolution input extent " + std::to_string(in) +
                     " smaller than kernel span " + std::to_string(span));
  return (in + 2 * g.padding - span) / g.stride + 1;
}

template <Real T>
void ConvParams<T>::validate() const {
  if (weights.rank() != 4)
    throw ShapeError("conv weights must be rank 4, got " +
                     to_string(weights.shape()));
  if (kernel_h() % 2 == 0 || kernel_w() % 2 == 0)
    throw ShapeError("conv kernel extents must be odd, got " +
                     to_string(weights.shape()));
  if (bias.rank() != 1 || bias.dim(0) != c_out())
    throw ShapeError("conv bias shape " + to_string(bias.shape()) +
                     " does not match c_out " + std::to_string(c_out()));
  check_geometry(geometry);
}

template <Real T>
ConvParams<T> make_conv_params(std::size_t c_in, std::size_t c_out,
                               std::size_t kernel, std::size_t dilation) {
  ConvParams<T> p;
  p.weights = Tensor<T>({c_out, c_in, kernel, kernel});
  p.bias = Tensor<T>({c_out});
  p.geometry = {1, dilation, dilation * (kernel - 1) / 2};
  return p;
}

template <Real T>
Tensor<T> group_conv2d_forward(const Tensor<T>& x, const Tensor<T>& weights,
                               const Tensor<T>& bias, const ConvGeometry& g,
                               std::size_t groups) {
  const ConvShape s = group_shape(x, weights, g, groups, "group_conv2d_forward");
  if (!bias.empty() && bias.size() != groups * s.c_out)
    throw ShapeError("group_conv2d_forward: bias length mismatch");
  const std::size_t batch = x.dim(0);
  Tensor<T> y({batch, groups * s.c_out, s.oh, s.ow});
  const auto tasks = static_cast<std::ptrdiff_t>(batch * groups);
  const std::size_t in_image = groups * s.c_in * s.h * s.w;
  const std::size_t out_image = groups * s.c_out * s.cols();
#pragma omp parallel
  {
    thread_local AlignedVector<T> col;
#pragma omp for schedule(static)
    for (std::ptrdiff_t task = 0; task < tasks; ++task) {
      const std::size_t n = static_cast<std::size_t>(task) / groups;
      const std::size_t grp = static_cast<std::size_t>(task) % groups;
      forward_image(x.data() + n * in_image + grp * s.c_in * s.h * s.w,
                    weights.data() + grp * s.c_out * s.rows(),
                    bias.empty() ? nullptr : bias.data() + grp * s.c_out,
                    y.data() + n * out_image + grp * s.c_out * s.cols(), s,
                    col);
    }
  }
  return y;
}

template <Real T>
GradPack<T> group_conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights,
                                  const ConvGeometry& g, std::size_t groups,
                                  const Tensor<T>& grad_out) {
  const ConvShape s =
      group_shape(x, weights, g, groups, "group_conv2d_backward");
  const std::size_t batch = x.dim(0);
  const Shape expected{batch, groups * s.c_out, s.oh, s.ow};
  if (grad_out.shape() != expected)
    throw ShapeError("group_conv2d_backward: grad_out shape " +
                     to_string(grad_out.shape()) + " expected " +
                     to_string(expected));
  GradPack<T> gp{Tensor<T>(x.shape()), Tensor<T>(weights.shape()),
                 Tensor<T>({groups * s.c_out})};
  const std::size_t bank = s.c_out * s.rows();
  const auto tasks = static_cast<std::ptrdiff_t>(batch * groups);
  // Per-task partial weight/bias gradients, reduced in a fixed order below so
  // the result does not depend on the thread count.
  AlignedVector<T> partial_w(static_cast<std::size_t>(tasks) * bank);
  AlignedVector<T> partial_b(static_cast<std::size_t>(tasks) * s.c_out);
  const std::size_t in_image = groups * s.c_in * s.h * s.w;
  const std::size_t out_image = groups * s.c_out * s.cols();
#pragma omp parallel
  {
    thread_local AlignedVector<T> col, gcol;
#pragma omp for schedule(static)
    for (std::ptrdiff_t task = 0; task < tasks; ++task) {
      const std::size_t n = static_cast<std::size_t>(task) / groups;
      const std::size_t grp = static_cast<std::size_t>(task) % groups;
      const std::size_t in_off = n * in_image + grp * s.c_in * s.h * s.w;
      backward_image(x.data() + in_off, weights.data() + grp * bank,
                     grad_out.data() + n * out_image + grp * s.c_out * s.cols(),
                     gp.grad_input.data() + in_off,
                     partial_w.data() + static_cast<std::size_t>(task) * bank,
                     partial_b.data() + static_cast<std::size_t>(task) * s.c_out,
                     s, col, gcol);
    }
  }
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      const std::size_t task = n * groups + grp;
      T* gw = gp.grad_weights.data() + grp * bank;
      const T* pw = partial_w.data() + task * bank;
      for (std::size_t k = 0; k < bank; ++k) gw[k] += pw[k];
      T* gb = gp.grad_bias.data() + grp * s.c_out;
      const T* pb = partial_b.data() + task * s.c_out;
      for (std::size_t k = 0; k < s.c_out; ++k) gb[k] += pb[k];
    }
  }
  return gp;
}

template <Real T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  p.validate();
  return group_conv2d_forward(x, p.weights, p.bias, p.geometry, 1);
}

template <Real T>
GradPack<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p,
                            const Tensor<T>& grad_out) {
  p.validate();
  return group_conv2d_backward(x, p.weights, p.geometry, 1, grad_out);
}

template <Real T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::size_t out_h,
                            std::size_t out_w) {
  const Dims4 d = dims4(x, "adaptive_avg_pool");
  if (out_h == 0 || out_w == 0)
    throw ShapeError("adaptive_avg_pool: zero-size output requested");
  if (out_h > d.h || out_w > d.w)
    throw ShapeError("adaptive_avg_pool: output " + std::to_string(out_h) +
                     "x" + std::to_string(out_w) + " larger than input " +
                     std::to_string(d.h) + "x" + std::to_string(d.w));
  Tensor<T> out({d.n, d.c, out_h, out_w});
  for (std::size_t s = 0; s < d.n * d.c; ++s) {
    const T* in = x.data() + s * d.plane();
    T* o = out.data() + s * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t y0 = i * d.h / out_h;
      const std::size_t y1 = ((i + 1) * d.h + out_h - 1) / out_h;
      for (std::size_t j = 0; j < out_w; ++j) {
        const std::size_t x0 = j * d.w / out_w;
        const std::size_t x1 = ((j + 1) * d.w + out_w - 1) / out_w;
        T acc = 0;
        for (std::size_t yy = y0; yy < y1; ++yy)
          for (std::size_t xx = x0; xx < x1; ++xx) acc += in[yy * d.w + xx];
        o[i * out_w + j] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

template <Real T>
Tensor<T> softmax_2d(const Tensor<T>& x) {
  const Dims4 d = dims4(x, "softmax_2d");
  Tensor<T> out(x.shape());
  const std::size_t plane = d.plane();
  for (std::size_t s = 0; s < d.n * d.c; ++s) {
    const T* in = x.data() + s * plane;
    T* o = out.data() + s * plane;
    const T mx = *std::max_element(in, in + plane);
    T total = 0;
    for (std::size_t k = 0; k < plane; ++k) total += (o[k] = std::exp(in[k] - mx));
    for (std::size_t k = 0; k < plane; ++k) o[k] /= total;
  }
  return out;
}

template <Real T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-x[i]));
  return out;
}

template <Real T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(x[i], T(0));
  return out;
}

template <Real T>
Tensor<T> heaviside_ge(const Tensor<T>& x, T threshold) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] >= threshold ? T(1) : T(0);
  return out;
}

template <Real T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t s) {
  const Dims4 d = dims4(x, "pixel_shuffle");
  if (s == 0 || d.c % (s * s) != 0)
    throw ShapeError("pixel_shuffle: " + std::to_string(d.c) +
                     " channels not divisible by " + std::to_string(s * s));
  const std::size_t c = d.c / (s * s);
  Tensor<T> out({d.n, c, d.h * s, d.w * s});
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t di = 0; di < s; ++di)
        for (std::size_t dj = 0; dj < s; ++dj)
          for (std::size_t i = 0; i < d.h; ++i)
            for (std::size_t j = 0; j < d.w; ++j)
              out.at(n, ch, s * i + di, s * j + dj) =
                  x.at(n, ch * s * s + di * s + dj, i, j);
  return out;
}

template <Real T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t s) {
  const Dims4 d = dims4(x, "pixel_unshuffle");
  if (s == 0 || d.h % s != 0 || d.w % s != 0)
    throw ShapeError("pixel_unshuffle: spatial extents not divisible by " +
                     std::to_string(s));
  Tensor<T> out({d.n, d.c * s * s, d.h / s, d.w / s});
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t ch = 0; ch < d.c; ++ch)
      for (std::size_t di = 0; di < s; ++di)
        for (std::size_t dj = 0; dj < s; ++dj)
          for (std::size_t i = 0; i < d.h / s; ++i)
            for (std::size_t j = 0; j < d.w / s; ++j)
              out.at(n, ch * s * s + di * s + dj, i, j) =
                  x.at(n, ch, s * i + di, s * j + dj);
  return out;
}

#define IKM_INSTANTIATE_OPS(T)                                                 \
  template struct ConvParams<T>;                                              \
  template ConvParams<T> make_conv_params<T>(std::size_t, std::size_t,        \
                                             std::size_t, std::size_t);       \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const ConvParams<T>&);  \
  template GradPack<T> conv2d_backward(const Tensor<T>&, const ConvParams<T>&, \
                                       const Tensor<T>&);                     \
  template Tensor<T> group_conv2d_forward(const Tensor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&,                   \
                                          const ConvGeometry&, std::size_t);  \
  template GradPack<T> group_conv2d_backward(                                 \
      const Tensor<T>&, const Tensor<T>&, const ConvGeometry&, std::size_t,   \
      const Tensor<T>&);                                                      \
  template Tensor<T> adaptive_avg_pool(const Tensor<T>&, std::size_t,         \
                                       std::size_t);                          \
  template Tensor<T> softmax_2d(const Tensor<T>&);                            \
  template Tensor<T> sigmoid(const Tensor<T>&);                               \
  template Tensor<T> relu(const Tensor<T>&);                                  \
  template Tensor<T> heaviside_ge(const Tensor<T>&, T);                       \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, std::size_t);            \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, std::size_t);

IKM_INSTANTIATE_OPS(float)
IKM_INSTANTIATE_OPS(double)

}  // namespace ikm
