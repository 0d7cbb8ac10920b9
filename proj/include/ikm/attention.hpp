#pragma once

#include <cstddef>

#include "ikm/ops.hpp"
#include "ikm/tensor.hpp"

namespace ikm {

// Squeeze-and-excitation channel attention parameters.
template <Real T>
struct CaParams {
  Tensor<T> fc1_weights;  // inner x C
  Tensor<T> fc1_bias;     // inner
  Tensor<T> fc2_weights;  // C x inner
  Tensor<T> fc2_bias;     // C

  std::size_t channels() const { return fc2_weights.dim(0); }
  std::size_t inner() const { return fc1_weights.dim(0); }
  void validate() const;
};

// Inner width max(1, floor(C / r)).
std::size_t ca_inner_width(std::size_t channels, std::size_t reduction);

template <Real T>
CaParams<T> make_ca_params(std::size_t channels, std::size_t reduction);

template <Real T>
struct CaCache {
  Tensor<T> input;
  Tensor<T> pooled;   // B x C
  Tensor<T> hidden;   // B x inner, before ReLU
  Tensor<T> scale;    // B x C, after sigmoid
};

template <Real T>
struct CaGrads {
  Tensor<T> grad_input;
  CaParams<T> grad_params;
};

template <Real T>
struct CaForward {
  Tensor<T> output;
  CaCache<T> cache;
};

// out = y * sigmoid(FC(relu(FC(gap(y))))) per channel.
template <Real T>
CaForward<T> channel_attention_forward(const Tensor<T>& y, const CaParams<T>& p);

template <Real T>
Tensor<T> channel_attention(const Tensor<T>& y, const CaParams<T>& p) {
  return channel_attention_forward(y, p).output;
}

template <Real T>
CaGrads<T> channel_attention_backward(const CaCache<T>& cache,
                                      const CaParams<T>& p,
                                      const Tensor<T>& grad_out);

// CBAM-style spatial attention: one conv over [channel mean, channel max].
template <Real T>
struct SaParams {
  ConvParams<T> conv;  // 1 x 2 x k x k
  void validate() const;
};

template <Real T>
SaParams<T> make_sa_params(std::size_t kernel);

template <Real T>
struct SaCache {
  Tensor<T> input;
  Tensor<T> stats;      // B x 2 x H x W
  Tensor<T> attention;  // B x 1 x H x W, after sigmoid
};

template <Real T>
struct SaForward {
  Tensor<T> output;
  SaCache<T> cache;
};

template <Real T>
struct SaGrads {
  Tensor<T> grad_input;
  SaParams<T> grad_params;
};

template <Real T>
SaForward<T> spatial_attention_forward(const Tensor<T>& y, const SaParams<T>& p);

template <Real T>
Tensor<T> spatial_attention(const Tensor<T>& y, const SaParams<T>& p) {
  return spatial_attention_forward(y, p).output;
}

template <Real T>
SaGrads<T> spatial_attention_backward(const SaCache<T>& cache,
                                      const SaParams<T>& p,
                                      const Tensor<T>& grad_out);

}  // namespace ikm
