#pragma once

#include <cstddef>

#include "ikm/ops.hpp"
#include "ikm/tensor.hpp"

namespace ikm {

struct Extent {
  std::size_t h = 3, w = 3;
  friend bool operator==(const Extent&, const Extent&) = default;
};

/// Contextual attention generation settings for one host convolution.
///
/// The adaptive pool spans the dilated receptive field R = K + (K-1)(D-1);
/// attention values are read back at the K x K tap positions (every D-th
/// pooled cell), so the softmax and the |R| scale both run over K*K taps.
struct CagConfig {
  double threshold = 0.0;
  Extent receptive_field{3, 3};
  std::size_t dilation = 1;

  Extent taps() const;
  void validate() const;

  static CagConfig for_kernel(std::size_t kernel_h, std::size_t kernel_w,
                              std::size_t dilation, double threshold);
};

/// Per-image kernel attention, B x c_in x taps_h x taps_w. Values lie in (1, 2)
/// and are shared by every output channel of the host convolution.
template <Real T>
struct KernelAttention {
  Tensor<T> values;
  Extent receptive_field;

  std::size_t batch() const { return values.dim(0); }
  std::size_t channels() const { return values.dim(1); }
};

// threshold -> proportion pooling over R -> 1 + sigmoid(|taps| softmax - 1)
template <Real T>
KernelAttention<T> cag_generate(const Tensor<T>& x, const CagConfig& cfg);

// w_hat[(b, j), i, p] = a[b, i, p] * w[j, i, p]; shape (B*c_out) x c_in x K x K.
template <Real T>
Tensor<T> modulate_kernels(const KernelAttention<T>& a, const ConvParams<T>& p);

template <Real T>
struct IkmCache {
  Tensor<T> input;
  KernelAttention<T> attention;
};

template <Real T>
struct IkmForward {
  Tensor<T> output;
  IkmCache<T> cache;
};

/// Image-specific forward: every image gets its own modulated kernel bank and
/// the batch runs as one grouped convolution with groups = B.
template <Real T>
IkmForward<T> ikm_conv_forward(const Tensor<T>& x, const ConvParams<T>& p,
                               const CagConfig& cfg);

// Same as ikm_conv_forward with a caller-supplied attention.
template <Real T>
IkmForward<T> ikm_conv_forward(const Tensor<T>& x, const ConvParams<T>& p,
                               KernelAttention<T> attention);

/// grad_weights = sum_b a_b (.) G_b where G_b is the weight gradient of image
/// b's modulated bank. The attention branch is treated as detached: the
/// threshold has zero derivative almost everywhere, so grad_input only flows
/// through the convolution.
template <Real T>
GradPack<T> ikm_conv_backward(const IkmCache<T>& cache, const ConvParams<T>& p,
                              const Tensor<T>& grad_out);

// Batch-averaged attention folded into one shared kernel bank.
template <Real T>
KernelAttention<T> batch_average(const KernelAttention<T>& a);

template <Real T>
IkmForward<T> go_conv_forward(const Tensor<T>& x, const ConvParams<T>& p,
                              const CagConfig& cfg);

template <Real T>
IkmForward<T> go_conv_forward(const Tensor<T>& x, const ConvParams<T>& p,
                              KernelAttention<T> attention);

// Expects cache.attention to hold the batch-averaged (batch 1) attention.
template <Real T>
GradPack<T> go_conv_backward(const IkmCache<T>& cache, const ConvParams<T>& p,
                             const Tensor<T>& grad_out);

}  // namespace ikm
