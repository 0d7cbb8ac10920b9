#pragma once

#include <cstddef>

#include "ikm/tensor.hpp"

namespace ikm {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;  // zero padding on every border
};

// Output extent along one axis; throws when the kernel does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               const ConvGeometry& g);

// Spatial extent covered by a dilated kernel: K + (K - 1)(D - 1).
constexpr std::size_t receptive_extent(std::size_t kernel,
                                       std::size_t dilation) {
  return kernel + (kernel - 1) * (dilation - 1);
}

template <Real T>
struct ConvParams {
  Tensor<T> weights;  // c_out x c_in x K_h x K_w
  Tensor<T> bias;     // c_out
  ConvGeometry geometry;

  std::size_t c_out() const { return weights.dim(0); }
  std::size_t c_in() const { return weights.dim(1); }
  std::size_t kernel_h() const { return weights.dim(2); }
  std::size_t kernel_w() const { return weights.dim(3); }

  // Checks weight rank, odd kernel extents, bias length and geometry.
  void validate() const;
};

// Zero-initialised parameters for a "same"-padded convolution.
template <Real T>
ConvParams<T> make_conv_params(std::size_t c_in, std::size_t c_out,
                               std::size_t kernel, std::size_t dilation = 1);

template <Real T>
struct GradPack {
  Tensor<T> grad_input;
  Tensor<T> grad_weights;
  Tensor<T> grad_bias;
};

// y[b,j,p0] = sum_i sum_p x[b,i,p0+p] * w[j,i,p] + b_j, zero padded borders.
// Optimized path: per-image im2col followed by a matrix product, parallel
// over the batch.
template <Real T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p);

template <Real T>
GradPack<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p,
                            const Tensor<T>& grad_out);

// Grouped convolution. Input N x (G*c_in) x H x W, weights (G*c_out) x c_in
// x K_h x K_w, bias of length G*c_out (may be empty). Group g convolves
// input channels [g*c_in, (g+1)*c_in) with kernel bank g.
template <Real T>
Tensor<T> group_conv2d_forward(const Tensor<T>& x, const Tensor<T>& weights,
                               const Tensor<T>& bias, const ConvGeometry& g,
                               std::size_t groups);

template <Real T>
GradPack<T> group_conv2d_backward(const Tensor<T>& x, const Tensor<T>& weights,
                                  const ConvGeometry& g, std::size_t groups,
                                  const Tensor<T>& grad_out);

// Mean over bins [floor(i*H/oh), ceil((i+1)*H/oh)) x [floor(j*W/ow),
// ceil((j+1)*W/ow)).
template <Real T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::size_t out_h,
                            std::size_t out_w);

// Softmax over the spatial positions of every (b, c) slice.
template <Real T>
Tensor<T> softmax_2d(const Tensor<T>& x);

template <Real T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <Real T>
Tensor<T> relu(const Tensor<T>& x);

// 1 where x >= threshold, else 0.
template <Real T>
Tensor<T> heaviside_ge(const Tensor<T>& x, T threshold);

// out[b, c, s*i+di, s*j+dj] = x[b, c*s*s + di*s + dj, i, j]
template <Real T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t s);

template <Real T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t s);

// Serial direct-loop kernels. These are the authoritative oracles for the
// optimized paths above and are kept free of any shared code with them.
namespace reference {

template <Real T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p);

template <Real T>
GradPack<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p,
                            const Tensor<T>& grad_out);

template <Real T>
Tensor<T> group_conv2d_forward(const Tensor<T>& x, const Tensor<T>& weights,
                               const Tensor<T>& bias, const ConvGeometry& g,
                               std::size_t groups);

}  // namespace reference

}  // namespace ikm
