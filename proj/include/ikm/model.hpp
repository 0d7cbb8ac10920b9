#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ikm/attention.hpp"
#include "ikm/ikm.hpp"
#include "ikm/ops.hpp"
#include "ikm/tensor.hpp"

namespace ikm {

enum class AttentionMode { none, channel, spatial, ikm };

// How modulated convolutions treat a mini-batch: one kernel bank per image
// (image-specific) or one batch-averaged bank (general).
enum class Optimization { iso, go };

const char* to_string(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& s);
const char* to_string(Optimization opt);
Optimization parse_optimization(const std::string& s);

struct UhdbConfig {
  std::vector<std::size_t> depths{6, 5, 4, 4, 5, 6};
  std::size_t growth = 12;
  // false chains the units plainly inside the block residual (ablation).
  bool u_style = true;

  std::size_t units() const { return depths.size(); }
  void validate() const;
};

struct UhdnConfig {
  std::size_t blocks = 4;
  UhdbConfig block;
  std::size_t channels = 64;
  std::size_t scale = 2;
  // Width of the reconstruction tail; 0 keeps the trunk width C and drops
  // the reduction conv.
  std::size_t upscale_channels = 16;
  bool trunk_conv = true;
  std::size_t kernel = 3;
  std::size_t dilation = 1;
  AttentionMode attention = AttentionMode::ikm;
  double threshold = 0.0;
  std::size_t ca_reduction = 16;
  std::size_t sa_kernel = 7;

  std::size_t tail_channels() const {
    return upscale_channels ? upscale_channels : channels;
  }
  // Per-stage factors of the upscaler: x4 runs as two x2 stages.
  std::vector<std::size_t> upscale_stages() const;
  CagConfig cag() const;
  void validate() const;
};

template <Real T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

/// Convolution layer with optional kernel modulation. Caches what backward
/// needs from the most recent forward call.
template <Real T>
class ConvLayer {
 public:
  ConvLayer(std::string name, std::size_t c_in, std::size_t c_out,
            std::size_t kernel, std::size_t dilation, bool modulated,
            double threshold);

  Tensor<T> forward(const Tensor<T>& x, Optimization opt);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(std::vector<ParamRef<T>>& out);

  const std::string& name() const { return name_; }
  bool modulated() const { return modulated_; }
  ConvParams<T>& params() { return params_; }
  const ConvParams<T>& params() const { return params_; }
  // Attention from the last forward; null for unmodulated layers.
  const KernelAttention<T>* attention() const;

 private:
  std::string name_;
  ConvParams<T> params_;
  Tensor<T> grad_weights_;
  Tensor<T> grad_bias_;
  bool modulated_;
  CagConfig cag_;
  Optimization last_opt_ = Optimization::iso;
  IkmCache<T> cache_;
};

template <Real T>
class ChannelAttentionLayer {
 public:
  ChannelAttentionLayer(std::string name, std::size_t channels,
                        std::size_t reduction);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(std::vector<ParamRef<T>>& out);

 private:
  std::string name_;
  CaParams<T> params_;
  CaParams<T> grads_;
  CaCache<T> cache_;
};

template <Real T>
class SpatialAttentionLayer {
 public:
  SpatialAttentionLayer(std::string name, std::size_t kernel);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(std::vector<ParamRef<T>>& out);

 private:
  std::string name_;
  SaParams<T> params_;
  SaParams<T> grads_;
  SaCache<T> cache_;
};

// 3x3 conv (optionally modulated) -> optional CA/SA -> ReLU.
template <Real T>
class CompositeLayer {
 public:
  CompositeLayer(const std::string& name, std::size_t c_in, std::size_t c_out,
                 const UhdnConfig& cfg);
  Tensor<T> forward(const Tensor<T>& x, Optimization opt);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(std::vector<ParamRef<T>>& out);
  ConvLayer<T>& conv() { return conv_; }

 private:
  ConvLayer<T> conv_;
  std::optional<ChannelAttentionLayer<T>> ca_;
  std::optional<SpatialAttentionLayer<T>> sa_;
  Tensor<T> activated_;
};

/// Dense unit: x^{l+1} = composite_l([x^0, ..., x^l]) for l < depth, then a
/// 1x1 transition conv (no ReLU) over the full concatenation.
template <Real T>
class DenseUnit {
 public:
  DenseUnit(const std::string& name, std::size_t in_channels,
            std::size_t depth, std::size_t out_channels, const UhdnConfig& cfg);
  Tensor<T> forward(const Tensor<T>& x, Optimization opt);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(std::vector<ParamRef<T>>& out);
  std::vector<ConvLayer<T>*> conv_layers();

  std::size_t in_channels() const { return in_channels_; }
  std::size_t depth() const { return layers_.size(); }
  std::size_t growth() const { return growth_; }

 private:
  std::size_t in_channels_;
  std::size_t growth_;
  std::vector<CompositeLayer<T>> layers_;
  ConvLayer<T> transition_;
};

/// U-hourglass dense block. For M units F_1..F_M:
///   a_1 = F_1(x), a_k = F_k(a_{k-1}) for k <= M/2,
///   r = F_{M/2+1}(a_{M/2}), r = F_{M-k+2}(a_{k-1} + r) for k = M/2 .. 2,
///   y = x + r.
template <Real T>
class Uhdb {
 public:
  Uhdb(const std::string& name, const UhdnConfig& cfg);
  Tensor<T> forward(const Tensor<T>& x, Optimization opt);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(std::vector<ParamRef<T>>& out);
  std::vector<ConvLayer<T>*> conv_layers();

 private:
  bool u_style_;
  std::vector<DenseUnit<T>> units_;
};

struct DatasetStats {
  std::array<double, 3> mean_rgb{0.5, 0.5, 0.5};
};

/// Head conv -> N U-HDBs -> trunk conv, plus a global residual from the head
/// -> reduction -> sub-pixel upscaling stages -> tail conv -> + mean RGB.
/// Inputs are mean-subtracted RGB; outputs are in the original [0,1] range.
template <Real T>
class Uhdn {
 public:
  explicit Uhdn(UhdnConfig cfg, DatasetStats stats = {});

  Tensor<T> forward(const Tensor<T>& lr_normalized, Optimization opt);
  Tensor<T> backward(const Tensor<T>& grad_out);

  std::vector<ParamRef<T>> parameters();
  std::size_t parameter_count();
  void zero_grad();
  // Zero-mean normal weights with variance 2 / fan_in, zero biases.
  void initialize(std::uint64_t seed);
  std::vector<ConvLayer<T>*> conv_layers();

  const UhdnConfig& config() const { return cfg_; }
  const DatasetStats& stats() const { return stats_; }
  void set_stats(const DatasetStats& s) { stats_ = s; }

 private:
  UhdnConfig cfg_;
  DatasetStats stats_;
  ConvLayer<T> head_;
  std::vector<Uhdb<T>> blocks_;
  std::optional<ConvLayer<T>> trunk_;
  std::optional<ConvLayer<T>> reduce_;
  std::vector<ConvLayer<T>> upscale_;
  ConvLayer<T> tail_;
};

// Zero-mean normal with variance 2 / fan_in for every rank >= 2 parameter,
// zeros for rank-1 parameters. Fan-in is the product of all non-leading axes.
template <Real T>
void he_initialize(std::vector<ParamRef<T>>& params, std::uint64_t seed);

}  // namespace ikm
