#include "ikm/model.hpp"

#include <cmath>
#include <random>

namespace ikm {

const char* to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::none: return "none";
    case AttentionMode::channel: return "ca";
    case AttentionMode::spatial: return "sa";
    case AttentionMode::ikm: return "ikm";
  }
  return "?";
}

AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "none" || s == "vanilla") return AttentionMode::none;
  if (s == "ca") return AttentionMode::channel;
  if (s == "sa") return AttentionMode::spatial;
  if (s == "ikm") return AttentionMode::ikm;
  throw ConfigError("unknown attention mode '" + s + "'");
}

const char* to_string(Optimization opt) {
  return opt == Optimization::iso ? "iso" : "go";
}

Optimization parse_optimization(const std::string& s) {
  if (s == "iso") return Optimization::iso;
  if (s == "go") return Optimization::go;
  throw ConfigError("unknown optimization mode '" + s + "'");
}

void UhdbConfig::validate() const {
  if (depths.empty()) throw ConfigError("block needs at least one dense unit");
  if (growth == 0) throw ConfigError("growth rate must be positive");
  for (std::size_t d : depths)
    if (d == 0) throw ConfigError("dense unit depth must be positive");
  if (!u_style) return;
  if (depths.size() % 2)
    throw ConfigError("U-style block needs an even unit count, got " +
                      std::to_string(depths.size()));
  for (std::size_t i = 0; i < depths.size(); ++i)
    if (depths[i] != depths[depths.size() - 1 - i])
      throw ConfigError("U-style block depths must be symmetric");
}

std::vector<std::size_t> UhdnConfig::upscale_stages() const {
  switch (scale) {
    case 2: return {2};
    case 3: return {3};
    case 4: return {2, 2};
    default:
      throw ConfigError("unsupported scale " + std::to_string(scale) +
                        " (expected 2, 3 or 4)");
  }
}

CagConfig UhdnConfig::cag() const {
  return CagConfig::for_kernel(kernel, kernel, dilation, threshold);
}

void UhdnConfig::validate() const {
  if (blocks == 0) throw ConfigError("model.blocks must be positive");
  if (channels == 0) throw ConfigError("model.channels must be positive");
  if (kernel % 2 == 0) throw ConfigError("model.kernel must be odd");
  if (dilation == 0) throw ConfigError("model.dilation must be positive");
  upscale_stages();
  block.validate();
  cag().validate();
  ca_inner_width(block.growth, ca_reduction);
  if (sa_kernel % 2 == 0) throw ConfigError("model.sa_kernel must be odd");
}

// ---------------------------------------------------------------------------

template <Real T>
ConvLayer<T>::ConvLayer(std::string name, std::size_t c_in, std::size_t c_out,
                        std::size_t kernel, std::size_t dilation,
                        bool modulated, double threshold)
    : name_(std::move(name)),
      params_(make_conv_params<T>(c_in, c_out, kernel, dilation)),
      grad_weights_(params_.weights.shape()),
      grad_bias_(params_.bias.shape()),
      modulated_(modulated),
      cag_(CagConfig::for_kernel(kernel, kernel, dilation, threshold)) {}

template <Real T>
Tensor<T> ConvLayer<T>::forward(const Tensor<T>& x, Optimization opt) {
  if (!modulated_) {
    cache_.input = x;
    return conv2d_forward(x, params_);
  }
  last_opt_ = opt;
  IkmForward<T> f = opt == Optimization::iso
                        ? ikm_conv_forward(x, params_, cag_)
                        : go_conv_forward(x, params_, cag_);
  cache_ = std::move(f.cache);
  return std::move(f.output);
}

template <Real T>
Tensor<T> ConvLayer<T>::backward(const Tensor<T>& grad_out) {
  GradPack<T> g;
  if (!modulated_)
    g = conv2d_backward(cache_.input, params_, grad_out);
  else if (last_opt_ == Optimization::iso)
    g = ikm_conv_backward(cache_, params_, grad_out);
  else
    g = go_conv_backward(cache_, params_, grad_out);
  add_inplace(grad_weights_, g.grad_weights);
  add_inplace(grad_bias_, g.grad_bias);
  return std::move(g.grad_input);
}

template <Real T>
void ConvLayer<T>::collect(std::vector<ParamRef<T>>& out) {
  out.push_back({name_ + ".weight", &params_.weights, &grad_weights_});
  out.push_back({name_ + ".bias", &params_.bias, &grad_bias_});
}

template <Real T>
const KernelAttention<T>* ConvLayer<T>::attention() const {
  if (!modulated_ || cache_.attention.values.empty()) return nullptr;
  return &cache_.attention;
}

// ---------------------------------------------------------------------------

template <Real T>
ChannelAttentionLayer<T>::ChannelAttentionLayer(std::string name,
                                                std::size_t channels,
                                                std::size_t reduction)
    : name_(std::move(name)),
      params_(make_ca_params<T>(channels, reduction)),
      grads_(make_ca_params<T>(channels, reduction)) {}

template <Real T>
Tensor<T> ChannelAttentionLayer<T>::forward(const Tensor<T>& x) {
  CaForward<T> f = channel_attention_forward(x, params_);
  cache_ = std::move(f.cache);
  return std::move(f.output);
}

template <Real T>
Tensor<T> ChannelAttentionLayer<T>::backward(const Tensor<T>& grad_out) {
  CaGrads<T> g = channel_attention_backward(cache_, params_, grad_out);
  add_inplace(grads_.fc1_weights, g.grad_params.fc1_weights);
  add_inplace(grads_.fc1_bias, g.grad_params.fc1_bias);
  add_inplace(grads_.fc2_weights, g.grad_params.fc2_weights);
  add_inplace(grads_.fc2_bias, g.grad_params.fc2_bias);
  return std::move(g.grad_input);
}

template <Real T>
void ChannelAttentionLayer<T>::collect(std::vector<ParamRef<T>>& out) {
  out.push_back({name_ + ".fc1.weight", &params_.fc1_weights, &grads_.fc1_weights});
  out.push_back({name_ + ".fc1.bias", &params_.fc1_bias, &grads_.fc1_bias});
  out.push_back({name_ + ".fc2.weight", &params_.fc2_weights, &grads_.fc2_weights});
  out.push_back({name_ + ".fc2.bias", &params_.fc2_bias, &grads_.fc2_bias});
}

template <Real T>
SpatialAttentionLayer<T>::SpatialAttentionLayer(std::string name,
                                                std::size_t kernel)
    : name_(std::move(name)),
      params_(make_sa_params<T>(kernel)),
      grads_(make_sa_params<T>(kernel)) {}

template <Real T>
Tensor<T> SpatialAttentionLayer<T>::forward(const Tensor<T>& x) {
  SaForward<T> f = spatial_attention_forward(x, params_);
  cache_ = std::move(f.cache);
  return std::move(f.output);
}

template <Real T>
Tensor<T> SpatialAttentionLayer<T>::backward(const Tensor<T>& grad_out) {
  SaGrads<T> g = spatial_attention_backward(cache_, params_, grad_out);
  add_inplace(grads_.conv.weights, g.grad_params.conv.weights);
  add_inplace(grads_.conv.bias, g.grad_params.conv.bias);
  return std::move(g.grad_input);
}

template <Real T>
void SpatialAttentionLayer<T>::collect(std::vector<ParamRef<T>>& out) {
  out.push_back({name_ + ".conv.weight", &params_.conv.weights, &grads_.conv.weights});
  out.push_back({name_ + ".conv.bias", &params_.conv.bias, &grads_.conv.bias});
}

// ---------------------------------------------------------------------------

template <Real T>
CompositeLayer<T>::CompositeLayer(const std::string& name, std::size_t c_in,
                                  std::size_t c_out, const UhdnConfig& cfg)
    : conv_(name + ".conv", c_in, c_out, cfg.kernel, cfg.dilation,
            cfg.attention == AttentionMode::ikm, cfg.threshold) {
  if (cfg.attention == AttentionMode::channel)
    ca_.emplace(name + ".ca", c_out, cfg.ca_reduction);
  else if (cfg.attention == AttentionMode::spatial)
    sa_.emplace(name + ".sa", cfg.sa_kernel);
}

template <Real T>
Tensor<T> CompositeLayer<T>::forward(const Tensor<T>& x, Optimization opt) {
  Tensor<T> y = conv_.forward(x, opt);
  if (ca_) y = ca_->forward(y);
  if (sa_) y = sa_->forward(y);
  for (auto& v : y.values()) v = std::max(v, T(0));
  activated_ = y;
  return y;
}

template <Real T>
Tensor<T> CompositeLayer<T>::backward(const Tensor<T>& grad_out) {
  require_same_shape(activated_, grad_out, "composite backward");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (activated_[i] <= T(0)) g[i] = T(0);
  if (sa_) g = sa_->backward(g);
  if (ca_) g = ca_->backward(g);
  return conv_.backward(g);
}

template <Real T>
void CompositeLayer<T>::collect(std::vector<ParamRef<T>>& out) {
  conv_.collect(out);
  if (ca_) ca_->collect(out);
  if (sa_) sa_->collect(out);
}

// ---------------------------------------------------------------------------

template <Real T>
DenseUnit<T>::DenseUnit(const std::string& name, std::size_t in_channels,
                        std::size_t depth, std::size_t out_channels,
                        const UhdnConfig& cfg)
    : in_channels_(in_channels),
      growth_(cfg.block.growth),
      transition_(name + ".transition", in_channels + depth * cfg.block.growth,
                  out_channels, 1, 1, false, cfg.threshold) {
  if (depth == 0) throw ConfigError("dense unit depth must be positive");
  layers_.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l)
    layers_.emplace_back(name + ".layers." + std::to_string(l),
                         in_channels + l * growth_, growth_, cfg);
  if (transition_.params().c_in() != in_channels_ + depth * growth_)
    throw ShapeError("dense unit transition width mismatch");
}

template <Real T>
Tensor<T> DenseUnit<T>::forward(const Tensor<T>& x, Optimization opt) {
  const Dims4 d = dims4(x, "dense unit");
  if (d.c != in_channels_)
    throw ShapeError("dense unit expects " + std::to_string(in_channels_) +
                     " channels, got " + std::to_string(d.c));
  const std::size_t total = in_channels_ + layers_.size() * growth_;
  Tensor<T> cat({d.n, total, d.h, d.w});
  write_channels(cat, x, 0);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t width = in_channels_ + l * growth_;
    Tensor<T> out = layers_[l].forward(channel_slice(cat, 0, width), opt);
    write_channels(cat, out, width);
  }
  return transition_.forward(cat, opt);
}

template <Real T>
Tensor<T> DenseUnit<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> grad_cat = transition_.backward(grad_out);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const std::size_t width = in_channels_ + l * growth_;
    Tensor<T> grad_in =
        layers_[l].backward(channel_slice(grad_cat, width, width + growth_));
    add_to_channels(grad_cat, grad_in, 0);
  }
  return channel_slice(grad_cat, 0, in_channels_);
}

template <Real T>
void DenseUnit<T>::collect(std::vector<ParamRef<T>>& out) {
  for (auto& l : layers_) l.collect(out);
  transition_.collect(out);
}

template <Real T>
std::vector<ConvLayer<T>*> DenseUnit<T>::conv_layers() {
  std::vector<ConvLayer<T>*> out;
  for (auto& l : layers_) out.push_back(&l.conv());
  out.push_back(&transition_);
  return out;
}

// ---------------------------------------------------------------------------

template <Real T>
Uhdb<T>::Uhdb(const std::string& name, const UhdnConfig& cfg)
    : u_style_(cfg.block.u_style) {
  cfg.block.validate();
  units_.reserve(cfg.block.units());
  for (std::size_t m = 0; m < cfg.block.units(); ++m)
    units_.emplace_back(name + ".units." + std::to_string(m), cfg.channels,
                        cfg.block.depths[m], cfg.channels, cfg);
}

template <Real T>
Tensor<T> Uhdb<T>::forward(const Tensor<T>& x, Optimization opt) {
  const std::size_t m = units_.size();
  if (!u_style_) {
    Tensor<T> h = x;
    for (auto& u : units_) h = u.forward(h, opt);
    add_inplace(h, x);
    return h;
  }
  const std::size_t half = m / 2;
  // down[k] holds a_{k+1}
  std::vector<Tensor<T>> down;
  down.reserve(half);
  down.push_back(units_[0].forward(x, opt));
  for (std::size_t k = 1; k < half; ++k)
    down.push_back(units_[k].forward(down.back(), opt));
  Tensor<T> r = units_[half].forward(down[half - 1], opt);
  for (std::size_t k = half; k >= 2; --k) {
    add_inplace(r, down[k - 2]);
    r = units_[m - k + 1].forward(r, opt);
  }
  add_inplace(r, x);
  return r;
}

template <Real T>
Tensor<T> Uhdb<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t m = units_.size();
  if (!u_style_) {
    Tensor<T> g = grad_out;
    for (std::size_t k = m; k-- > 0;) g = units_[k].backward(g);
    add_inplace(g, grad_out);
    return g;
  }
  const std::size_t half = m / 2;
  std::vector<Tensor<T>> grad_down(half);
  Tensor<T> g = grad_out;
  for (std::size_t k = 2; k <= half; ++k) {
    g = units_[m - k + 1].backward(g);
    grad_down[k - 2] = g;
  }
  Tensor<T> gd = units_[half].backward(g);
  for (std::size_t k = half; k-- > 0;) {
    if (!grad_down[k].empty()) add_inplace(gd, grad_down[k]);
    gd = units_[k].backward(gd);
  }
  add_inplace(gd, grad_out);
  return gd;
}

template <Real T>
void Uhdb<T>::collect(std::vector<ParamRef<T>>& out) {
  for (auto& u : units_) u.collect(out);
}

template <Real T>
std::vector<ConvLayer<T>*> Uhdb<T>::conv_layers() {
  std::vector<ConvLayer<T>*> out;
  for (auto& u : units_) {
    auto v = u.conv_layers();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

template <Real T>
Uhdn<T>::Uhdn(UhdnConfig cfg, DatasetStats stats)
    : cfg_((cfg.validate(), std::move(cfg))),
      stats_(stats),
      head_("head", 3, cfg_.channels, 3, 1,
            cfg_.attention == AttentionMode::ikm, cfg_.threshold),
      tail_("tail", cfg_.tail_channels(), 3, 3, 1, false, cfg_.threshold) {
  const bool ikm_on = cfg_.attention == AttentionMode::ikm;
  blocks_.reserve(cfg_.blocks);
  for (std::size_t b = 0; b < cfg_.blocks; ++b)
    blocks_.emplace_back("blocks." + std::to_string(b), cfg_);
  if (cfg_.trunk_conv)
    trunk_.emplace("trunk", cfg_.channels, cfg_.channels, 3, 1, ikm_on,
                   cfg_.threshold);
  if (cfg_.upscale_channels)
    reduce_.emplace("reduce", cfg_.channels, cfg_.upscale_channels, 3, 1,
                    false, cfg_.threshold);
  const std::size_t width = cfg_.tail_channels();
  const auto stages = cfg_.upscale_stages();
  for (std::size_t s = 0; s < stages.size(); ++s)
    upscale_.emplace_back("upscale." + std::to_string(s), width,
                          width * stages[s] * stages[s], 3, 1, false,
                          cfg_.threshold);
}

template <Real T>
Tensor<T> Uhdn<T>::forward(const Tensor<T>& lr, Optimization opt) {
  const Dims4 d = dims4(lr, "uhdn input");
  if (d.c != 3) throw ShapeError("uhdn input must have 3 channels");
  const Tensor<T> head = head_.forward(lr, opt);
  Tensor<T> t = head;
  for (auto& b : blocks_) t = b.forward(t, opt);
  if (trunk_) t = trunk_->forward(t, opt);
  add_inplace(t, head);
  if (reduce_) t = reduce_->forward(t, opt);
  const auto stages = cfg_.upscale_stages();
  for (std::size_t s = 0; s < stages.size(); ++s)
    t = pixel_shuffle(upscale_[s].forward(t, opt), stages[s]);
  Tensor<T> y = tail_.forward(t, opt);
  const Dims4 yd = dims4(y, "uhdn output");
  for (std::size_t n = 0; n < yd.n; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      T* plane = y.data() + n * yd.image() + c * yd.plane();
      const T mean = static_cast<T>(stats_.mean_rgb[c]);
      for (std::size_t k = 0; k < yd.plane(); ++k) plane[k] += mean;
    }
  return y;
}

template <Real T>
Tensor<T> Uhdn<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = tail_.backward(grad_out);
  const auto stages = cfg_.upscale_stages();
  for (std::size_t s = stages.size(); s-- > 0;)
    g = upscale_[s].backward(pixel_unshuffle(g, stages[s]));
  if (reduce_) g = reduce_->backward(g);
  const Tensor<T> grad_residual = g;
  if (trunk_) g = trunk_->backward(g);
  for (std::size_t b = blocks_.size(); b-- > 0;) g = blocks_[b].backward(g);
  add_inplace(g, grad_residual);
  return head_.backward(g);
}

template <Real T>
std::vector<ParamRef<T>> Uhdn<T>::parameters() {
  std::vector<ParamRef<T>> out;
  head_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  if (trunk_) trunk_->collect(out);
  if (reduce_) reduce_->collect(out);
  for (auto& u : upscale_) u.collect(out);
  tail_.collect(out);
  return out;
}

template <Real T>
std::size_t Uhdn<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value->size();
  return n;
}

template <Real T>
void Uhdn<T>::zero_grad() {
  for (auto& p : parameters()) p.grad->fill(T(0));
}

template <Real T>
void Uhdn<T>::initialize(std::uint64_t seed) {
  auto params = parameters();
  he_initialize(params, seed);
}

template <Real T>
std::vector<ConvLayer<T>*> Uhdn<T>::conv_layers() {
  std::vector<ConvLayer<T>*> out{&head_};
  for (auto& b : blocks_) {
    auto v = b.conv_layers();
    out.insert(out.end(), v.begin(), v.end());
  }
  if (trunk_) out.push_back(&*trunk_);
  if (reduce_) out.push_back(&*reduce_);
  for (auto& u : upscale_) out.push_back(&u);
  out.push_back(&tail_);
  return out;
}

template <Real T>
void he_initialize(std::vector<ParamRef<T>>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : params) {
    Tensor<T>& v = *p.value;
    if (v.rank() < 2) {
      v.fill(T(0));
      continue;
    }
    const double fan_in = static_cast<double>(v.size() / v.dim(0));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& x : v.values()) x = static_cast<T>(dist(rng));
  }
}

#define IKM_INSTANTIATE_MODEL(T)                                              \
  template class ConvLayer<T>;                                                \
  template class ChannelAttentionLayer<T>;                                    \
  template class SpatialAttentionLayer<T>;                                    \
  template class CompositeLayer<T>;                                           \
  template class DenseUnit<T>;                                                \
  template class Uhdb<T>;                                                     \
  template class Uhdn<T>;                                                     \
  template void he_initialize(std::vector<ParamRef<T>>&, std::uint64_t);

IKM_INSTANTIATE_MODEL(float)
IKM_INSTANTIATE_MODEL(double)

}  // namespace ikm
