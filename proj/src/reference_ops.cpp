// Direct-loop convolution kernels used as oracles for the optimized paths.

#include "ikm/ops.hpp"

namespace ikm::reference {
namespace {

struct Extents {
  std::size_t n, c_in, h, w, c_out, kh, kw, oh, ow;
};

template <Real T>
Extents extents(const Tensor<T>& x, const Tensor<T>& w, std::size_t groups,
                const ConvGeometry& g) {
  const Dims4 xd = dims4(x, "reference conv input");
  const Dims4 wd = dims4(w, "reference conv weights");
  if (groups == 0 || xd.c % groups || wd.n % groups || xd.c / groups != wd.c)
    throw ShapeError("reference conv: incompatible channels");
  return {xd.n, wd.c, xd.h, xd.w, wd.n / groups, wd.h, wd.w,
          conv_output_extent(xd.h, wd.h, g), conv_output_extent(xd.w, wd.w, g)};
}

// Input coordinate feeding output o through tap k; false inside the padding.
inline bool tap_source(std::size_t o, std::size_t k, std::size_t extent,
                       const ConvGeometry& g, std::size_t& src) {
  const auto pos = static_cast<std::ptrdiff_t>(o * g.stride + k * g.dilation) -
                   static_cast<std::ptrdiff_t>(g.padding);
  if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) return false;
  src = static_cast<std::size_t>(pos);
  return true;
}

}  // namespace

template <Real T>
Tensor<T> group_conv2d_forward(const Tensor<T>& x, const Tensor<T>& weights,
                               const Tensor<T>& bias, const ConvGeometry& g,
                               std::size_t groups) {
  const Extents e = extents(x, weights, groups, g);
  Tensor<T> y({e.n, groups * e.c_out, e.oh, e.ow});
  for (std::size_t n = 0; n < e.n; ++n)
    for (std::size_t grp = 0; grp < groups; ++grp)
      for (std::size_t j = 0; j < e.c_out; ++j) {
        const std::size_t oc = grp * e.c_out + j;
        for (std::size_t oy = 0; oy < e.oh; ++oy)
          for (std::size_t ox = 0; ox < e.ow; ++ox) {
            T acc = bias.empty() ? T(0) : bias[oc];
            for (std::size_t i = 0; i < e.c_in; ++i)
              for (std::size_t ki = 0; ki < e.kh; ++ki) {
                std::size_t iy;
                if (!tap_source(oy, ki, e.h, g, iy)) continue;
                for (std::size_t kj = 0; kj < e.kw; ++kj) {
                  std::size_t ix;
                  if (!tap_source(ox, kj, e.w, g, ix)) continue;
                  acc += x.at(n, grp * e.c_in + i, iy, ix) *
                         weights.at(oc, i, ki, kj);
                }
              }
            y.at(n, oc, oy, ox) = acc;
          }
      }
  return y;
}

template <Real T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  p.validate();
  return reference::group_conv2d_forward(x, p.weights, p.bias, p.geometry, 1);
}

template <Real T>
GradPack<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p,
                            const Tensor<T>& grad_out) {
  p.validate();
  const ConvGeometry& g = p.geometry;
  const Extents e = extents(x, p.weights, 1, g);
  if (grad_out.shape() != Shape{e.n, e.c_out, e.oh, e.ow})
    throw ShapeError("reference conv2d_backward: grad_out shape mismatch");
  GradPack<T> gp{Tensor<T>(x.shape()), Tensor<T>(p.weights.shape()),
                 Tensor<T>(p.bias.shape())};
  for (std::size_t n = 0; n < e.n; ++n)
    for (std::size_t j = 0; j < e.c_out; ++j)
      for (std::size_t oy = 0; oy < e.oh; ++oy)
        for (std::size_t ox = 0; ox < e.ow; ++ox) {
          const T go = grad_out.at(n, j, oy, ox);
          gp.grad_bias[j] += go;
          for (std::size_t i = 0; i < e.c_in; ++i)
            for (std::size_t ki = 0; ki < e.kh; ++ki) {
              std::size_t iy;
              if (!tap_source(oy, ki, e.h, g, iy)) continue;
              for (std::size_t kj = 0; kj < e.kw; ++kj) {
                std::size_t ix;
                if (!tap_source(ox, kj, e.w, g, ix)) continue;
                gp.grad_weights.at(j, i, ki, kj) += go * x.at(n, i, iy, ix);
                gp.grad_input.at(n, i, iy, ix) += go * p.weights.at(j, i, ki, kj);
              }
            }
        }
  return gp;
}

template Tensor<float> group_conv2d_forward(const Tensor<float>&,
                                            const Tensor<float>&,
                                            const Tensor<float>&,
                                            const ConvGeometry&, std::size_t);
template Tensor<double> group_conv2d_forward(const Tensor<double>&,
                                             const Tensor<double>&,
                                             const Tensor<double>&,
                                             const ConvGeometry&, std::size_t);
template Tensor<float> conv2d_forward(const Tensor<float>&,
                                      const ConvParams<float>&);
template Tensor<double> conv2d_forward(const Tensor<double>&,
                                       const ConvParams<double>&);
template GradPack<float> conv2d_backward(const Tensor<float>&,
                                         const ConvParams<float>&,
                                         const Tensor<float>&);
template GradPack<double> conv2d_backward(const Tensor<double>&,
                                          const ConvParams<double>&,
                                          const Tensor<double>&);

}  // namespace ikm::reference
