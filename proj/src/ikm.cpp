#include "ikm/ikm.hpp"

namespace ikm {

Extent CagConfig::taps() const {
  return {(receptive_field.h - 1) / dilation + 1,
          (receptive_field.w - 1) / dilation + 1};
}

void CagConfig::validate() const {
  if (dilation == 0) throw ConfigError("CAG dilation must be positive");
  if (receptive_field.h == 0 || receptive_field.w == 0)
    throw ConfigError("CAG receptive field must be non-empty");
  if ((receptive_field.h - 1) % dilation || (receptive_field.w - 1) % dilation)
    throw ConfigError("CAG receptive field " +
                      std::to_string(receptive_field.h) + "x" +
                      std::to_string(receptive_field.w) +
                      " is not a dilated kernel extent for dilation " +
                      std::to_string(dilation));
  if (!std::isfinite(threshold))
    throw ConfigError("CAG threshold must be finite");
}

CagConfig CagConfig::for_kernel(std::size_t kernel_h, std::size_t kernel_w,
                                std::size_t dilation, double threshold) {
  return {threshold,
          {receptive_extent(kernel_h, dilation),
           receptive_extent(kernel_w, dilation)},
          dilation};
}

template <Real T>
KernelAttention<T> cag_generate(const Tensor<T>& x, const CagConfig& cfg) {
  cfg.validate();
  const Dims4 d = dims4(x, "cag_generate");
  const Extent r = cfg.receptive_field;
  if (d.h < r.h || d.w < r.w)
    throw ShapeError("cag_generate: input " + std::to_string(d.h) + "x" +
                     std::to_string(d.w) + " smaller than receptive field " +
                     std::to_string(r.h) + "x" + std::to_string(r.w));
  // Fraction of above-threshold pixels in each of the R_h x R_w bins.
  const Tensor<T> proportion =
      adaptive_avg_pool(heaviside_ge(x, static_cast<T>(cfg.threshold)), r.h, r.w);

  const Extent taps = cfg.taps();
  Tensor<T> sampled({d.n, d.c, taps.h, taps.w});
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < taps.h; ++i)
        for (std::size_t j = 0; j < taps.w; ++j)
          sampled.at(n, c, i, j) =
              proportion.at(n, c, i * cfg.dilation, j * cfg.dilation);

  Tensor<T> a = softmax_2d(sampled);
  const T count = static_cast<T>(taps.h * taps.w);
  for (auto& v : a.values()) v = T(1) + T(1) / (T(1) + std::exp(-(count * v - T(1))));
  return {std::move(a), r};
}

template <Real T>
Tensor<T> modulate_kernels(const KernelAttention<T>& a, const ConvParams<T>& p) {
  p.validate();
  const Dims4 ad = dims4(a.values, "modulate_kernels attention");
  if (ad.c != p.c_in() || ad.h != p.kernel_h() || ad.w != p.kernel_w())
    throw ShapeError("modulate_kernels: attention " +
                     to_string(a.values.shape()) + " does not match kernels " +
                     to_string(p.weights.shape()));
  const std::size_t c_out = p.c_out();
  const std::size_t bank = p.weights.size();
  const std::size_t per_out = ad.image();  // c_in * K_h * K_w
  Tensor<T> w_hat({ad.n * c_out, p.c_in(), p.kernel_h(), p.kernel_w()});
  for (std::size_t b = 0; b < ad.n; ++b) {
    const T* att = a.values.data() + b * per_out;
    for (std::size_t j = 0; j < c_out; ++j) {
      const T* w = p.weights.data() + j * per_out;
      T* out = w_hat.data() + b * bank + j * per_out;
      for (std::size_t k = 0; k < per_out; ++k) out[k] = att[k] * w[k];
    }
  }
  return w_hat;
}

template <Real T>
IkmForward<T> ikm_conv_forward(const Tensor<T>& x, const ConvParams<T>& p,
                               KernelAttention<T> attention) {
  p.validate();
  const Dims4 d = dims4(x, "ikm_conv_forward");
  if (d.c != p.c_in())
    throw ShapeError("ikm_conv_forward: input has " + std::to_string(d.c) +
                     " channels, kernels expect " + std::to_string(p.c_in()));
  if (attention.batch() != d.n)
    throw ShapeError("ikm_conv_forward: attention batch does not match input");
  const Tensor<T> w_hat = modulate_kernels(attention, p);
  Tensor<T> bias({d.n * p.c_out()});
  for (std::size_t b = 0; b < d.n; ++b)
    std::copy_n(p.bias.data(), p.c_out(), bias.data() + b * p.c_out());

  // The batch becomes a single sample of B*c_in channels.
  Tensor<T> grouped = x.reshaped({1, d.n * d.c, d.h, d.w});
  Tensor<T> y = group_conv2d_forward(grouped, w_hat, bias, p.geometry, d.n);
  const Dims4 yd = dims4(y, "ikm_conv_forward");
  y.reshape({d.n, p.c_out(), yd.h, yd.w});
  grouped.reshape(x.shape());
  return {std::move(y), {std::move(grouped), std::move(attention)}};
}

template <Real T>
IkmForward<T> ikm_conv_forward(const Tensor<T>& x, const ConvParams<T>& p,
                               const CagConfig& cfg) {
  return ikm_conv_forward(x, p, cag_generate(x, cfg));
}

template <Real T>
GradPack<T> ikm_conv_backward(const IkmCache<T>& cache, const ConvParams<T>& p,
                              const Tensor<T>& grad_out) {
  p.validate();
  const Dims4 d = dims4(cache.input, "ikm_conv_backward cache");
  if (d.c != p.c_in() || cache.attention.values.rank() != 4 ||
      cache.attention.batch() != d.n)
    throw ShapeError("ikm_conv_backward: stale or mismatched cache");
  const Dims4 gd = dims4(grad_out, "ikm_conv_backward grad_out");
  const std::size_t oh = conv_output_extent(d.h, p.kernel_h(), p.geometry);
  const std::size_t ow = conv_output_extent(d.w, p.kernel_w(), p.geometry);
  if (gd.n != d.n || gd.c != p.c_out() || gd.h != oh || gd.w != ow)
    throw ShapeError("ikm_conv_backward: grad_out shape " +
                     to_string(grad_out.shape()) +
                     " does not match the cached forward");

  const Tensor<T> w_hat = modulate_kernels(cache.attention, p);
  GradPack<T> grouped = group_conv2d_backward(
      cache.input.reshaped({1, d.n * d.c, d.h, d.w}), w_hat, p.geometry, d.n,
      grad_out.reshaped({1, d.n * gd.c, gd.h, gd.w}));

  GradPack<T> gp{std::move(grouped.grad_input).reshaped(cache.input.shape()),
                 Tensor<T>(p.weights.shape()), Tensor<T>(p.bias.shape())};
  const std::size_t bank = p.weights.size();
  const std::size_t per_out = p.weights.size() / p.c_out();
  for (std::size_t b = 0; b < d.n; ++b) {
    const T* att = cache.attention.values.data() + b * per_out;
    for (std::size_t j = 0; j < p.c_out(); ++j) {
      const T* g = grouped.grad_weights.data() + b * bank + j * per_out;
      T* out = gp.grad_weights.data() + j * per_out;
      for (std::size_t k = 0; k < per_out; ++k) out[k] += att[k] * g[k];
      gp.grad_bias[j] += grouped.grad_bias[b * p.c_out() + j];
    }
  }
  return gp;
}

template <Real T>
KernelAttention<T> batch_average(const KernelAttention<T>& a) {
  const Dims4 d = dims4(a.values, "batch_average");
  Tensor<T> mean({1, d.c, d.h, d.w});
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t k = 0; k < d.image(); ++k)
      mean[k] += a.values[b * d.image() + k];
  scale_inplace(mean, T(1) / static_cast<T>(d.n));
  return {std::move(mean), a.receptive_field};
}

template <Real T>
IkmForward<T> go_conv_forward(const Tensor<T>& x, const ConvParams<T>& p,
                              KernelAttention<T> attention) {
  if (attention.batch() != 1) attention = batch_average(attention);
  ConvParams<T> modulated{modulate_kernels(attention, p), p.bias, p.geometry};
  Tensor<T> y = conv2d_forward(x, modulated);
  return {std::move(y), {x, std::move(attention)}};
}

template <Real T>
IkmForward<T> go_conv_forward(const Tensor<T>& x, const ConvParams<T>& p,
                              const CagConfig& cfg) {
  return go_conv_forward(x, p, batch_average(cag_generate(x, cfg)));
}

template <Real T>
GradPack<T> go_conv_backward(const IkmCache<T>& cache, const ConvParams<T>& p,
                             const Tensor<T>& grad_out) {
  if (cache.attention.values.rank() != 4 || cache.attention.batch() != 1)
    throw ShapeError("go_conv_backward: cache must hold batch-averaged attention");
  ConvParams<T> modulated{modulate_kernels(cache.attention, p), p.bias,
                          p.geometry};
  GradPack<T> gp = conv2d_backward(cache.input, modulated, grad_out);
  const std::size_t per_out = p.weights.size() / p.c_out();
  for (std::size_t j = 0; j < p.c_out(); ++j)
    for (std::size_t k = 0; k < per_out; ++k)
      gp.grad_weights[j * per_out + k] *= cache.attention.values[k];
  return gp;
}

#define IKM_INSTANTIATE_IKM(T)                                                \
  template KernelAttention<T> cag_generate(const Tensor<T>&, const CagConfig&); \
  template Tensor<T> modulate_kernels(const KernelAttention<T>&,              \
                                      const ConvParams<T>&);                  \
  template IkmForward<T> ikm_conv_forward(const Tensor<T>&,                   \
                                          const ConvParams<T>&,               \
                                          KernelAttention<T>);                \
  template IkmForward<T> ikm_conv_forward(                                    \
      const Tensor<T>&, const ConvParams<T>&, const CagConfig&);              \
  template GradPack<T> ikm_conv_backward(const IkmCache<T>&,                  \
                                         const ConvParams<T>&,                \
                                         const Tensor<T>&);                   \
  template KernelAttention<T> batch_average(const KernelAttention<T>&);       \
  template IkmForward<T> go_conv_forward(const Tensor<T>&,                    \
                                         const ConvParams<T>&,                \
                                         KernelAttention<T>);                 \
  template IkmForward<T> go_conv_forward(const Tensor<T>&,                    \
                                         const ConvParams<T>&,                \
                                         const CagConfig&);                   \
  template GradPack<T> go_conv_backward(const IkmCache<T>&,                   \
                                        const ConvParams<T>&,                 \
                                        const Tensor<T>&);

IKM_INSTANTIATE_IKM(float)
IKM_INSTANTIATE_IKM(double)

}  // namespace ikm
