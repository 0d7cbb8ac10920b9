#include "ikm/attention.hpp"

#include <algorithm>
#include <cmath>

namespace ikm {
namespace {

template <Real T>
T logistic(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

std::size_t ca_inner_width(std::size_t channels, std::size_t reduction) {
  if (reduction == 0) throw ConfigError("CA reduction ratio must be positive");
  return std::max<std::size_t>(1, channels / reduction);
}

template <Real T>
void CaParams<T>::validate() const {
  if (fc1_weights.rank() != 2 || fc2_weights.rank() != 2 ||
      fc1_weights.dim(1) != channels() || fc2_weights.dim(1) != inner() ||
      fc1_bias.shape() != Shape{inner()} || fc2_bias.shape() != Shape{channels()})
    throw ShapeError("channel attention parameters are inconsistent");
}

template <Real T>
CaParams<T> make_ca_params(std::size_t channels, std::size_t reduction) {
  const std::size_t inner = ca_inner_width(channels, reduction);
  return {Tensor<T>({inner, channels}), Tensor<T>({inner}),
          Tensor<T>({channels, inner}), Tensor<T>({channels})};
}

template <Real T>
CaForward<T> channel_attention_forward(const Tensor<T>& y, const CaParams<T>& p) {
  p.validate();
  const Dims4 d = dims4(y, "channel_attention");
  if (d.c != p.channels())
    throw ShapeError("channel_attention: input has " + std::to_string(d.c) +
                     " channels, parameters expect " +
                     std::to_string(p.channels()));
  const std::size_t inner = p.inner();
  CaCache<T> cache{y, Tensor<T>({d.n, d.c}), Tensor<T>({d.n, inner}),
                   Tensor<T>({d.n, d.c})};
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* plane = y.data() + n * d.image() + c * d.plane();
      T s = 0;
      for (std::size_t k = 0; k < d.plane(); ++k) s += plane[k];
      cache.pooled[n * d.c + c] = s / static_cast<T>(d.plane());
    }
    for (std::size_t r = 0; r < inner; ++r) {
      T acc = p.fc1_bias[r];
      for (std::size_t c = 0; c < d.c; ++c)
        acc += p.fc1_weights[r * d.c + c] * cache.pooled[n * d.c + c];
      cache.hidden[n * inner + r] = acc;
    }
    for (std::size_t c = 0; c < d.c; ++c) {
      T acc = p.fc2_bias[c];
      for (std::size_t r = 0; r < inner; ++r)
        acc += p.fc2_weights[c * inner + r] *
               std::max(cache.hidden[n * inner + r], T(0));
      cache.scale[n * d.c + c] = logistic(acc);
    }
  }
  Tensor<T> out(y.shape());
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    const T s = cache.scale[nc];
    for (std::size_t k = 0; k < d.plane(); ++k)
      out[nc * d.plane() + k] = y[nc * d.plane() + k] * s;
  }
  return {std::move(out), std::move(cache)};
}

template <Real T>
CaGrads<T> channel_attention_backward(const CaCache<T>& cache,
                                      const CaParams<T>& p,
                                      const Tensor<T>& grad_out) {
  require_same_shape(cache.input, grad_out, "channel_attention_backward");
  const Dims4 d = dims4(grad_out, "channel_attention_backward");
  const std::size_t inner = p.inner();
  CaGrads<T> g{Tensor<T>(grad_out.shape()),
               {Tensor<T>(p.fc1_weights.shape()), Tensor<T>(p.fc1_bias.shape()),
                Tensor<T>(p.fc2_weights.shape()),
                Tensor<T>(p.fc2_bias.shape())}};
  auto& gp = g.grad_params;
  std::vector<T> grad_z(d.c), grad_h(inner), grad_pool(d.c);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (n * d.c + c) * d.plane();
      T gs = 0;
      for (std::size_t k = 0; k < d.plane(); ++k)
        gs += grad_out[off + k] * cache.input[off + k];
      const T s = cache.scale[n * d.c + c];
      grad_z[c] = gs * s * (T(1) - s);
      gp.fc2_bias[c] += grad_z[c];
    }
    std::fill(grad_h.begin(), grad_h.end(), T(0));
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t r = 0; r < inner; ++r) {
        const T h = cache.hidden[n * inner + r];
        gp.fc2_weights[c * inner + r] += grad_z[c] * std::max(h, T(0));
        grad_h[r] += p.fc2_weights[c * inner + r] * grad_z[c];
      }
    std::fill(grad_pool.begin(), grad_pool.end(), T(0));
    for (std::size_t r = 0; r < inner; ++r) {
      if (cache.hidden[n * inner + r] <= T(0)) continue;
      gp.fc1_bias[r] += grad_h[r];
      for (std::size_t c = 0; c < d.c; ++c) {
        gp.fc1_weights[r * d.c + c] += grad_h[r] * cache.pooled[n * d.c + c];
        grad_pool[c] += p.fc1_weights[r * d.c + c] * grad_h[r];
      }
    }
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (n * d.c + c) * d.plane();
      const T s = cache.scale[n * d.c + c];
      const T gp_share = grad_pool[c] / static_cast<T>(d.plane());
      for (std::size_t k = 0; k < d.plane(); ++k)
        g.grad_input[off + k] = grad_out[off + k] * s + gp_share;
    }
  }
  return g;
}

template <Real T>
void SaParams<T>::validate() const {
  conv.validate();
  if (conv.c_in() != 2 || conv.c_out() != 1)
    throw ShapeError("spatial attention conv must map 2 channels to 1");
}

template <Real T>
SaParams<T> make_sa_params(std::size_t kernel) {
  return {make_conv_params<T>(2, 1, kernel)};
}

template <Real T>
SaForward<T> spatial_attention_forward(const Tensor<T>& y, const SaParams<T>& p) {
  p.validate();
  const Dims4 d = dims4(y, "spatial_attention");
  if (d.c == 0) throw ShapeError("spatial_attention: zero channels");
  Tensor<T> stats({d.n, 2, d.h, d.w});
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t k = 0; k < d.plane(); ++k) {
      const T* px = y.data() + n * d.image() + k;
      T s = 0;
      T m = px[0];
      for (std::size_t c = 0; c < d.c; ++c) {
        s += px[c * d.plane()];
        m = std::max(m, px[c * d.plane()]);
      }
      stats[n * 2 * d.plane() + k] = s / static_cast<T>(d.c);
      stats[n * 2 * d.plane() + d.plane() + k] = m;
    }
  Tensor<T> att = sigmoid(conv2d_forward(stats, p.conv));
  Tensor<T> out(y.shape());
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t k = 0; k < d.plane(); ++k) {
        const std::size_t i = n * d.image() + c * d.plane() + k;
        out[i] = y[i] * att[n * d.plane() + k];
      }
  return {std::move(out), {y, std::move(stats), std::move(att)}};
}

template <Real T>
SaGrads<T> spatial_attention_backward(const SaCache<T>& cache,
                                      const SaParams<T>& p,
                                      const Tensor<T>& grad_out) {
  require_same_shape(cache.input, grad_out, "spatial_attention_backward");
  const Dims4 d = dims4(grad_out, "spatial_attention_backward");
  const Tensor<T>& y = cache.input;
  Tensor<T> grad_z({d.n, 1, d.h, d.w});
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t k = 0; k < d.plane(); ++k) {
      T ga = 0;
      for (std::size_t c = 0; c < d.c; ++c) {
        const std::size_t i = n * d.image() + c * d.plane() + k;
        ga += grad_out[i] * y[i];
      }
      const T a = cache.attention[n * d.plane() + k];
      grad_z[n * d.plane() + k] = ga * a * (T(1) - a);
    }
  GradPack<T> conv_grads = conv2d_backward(cache.stats, p.conv, grad_z);
  SaGrads<T> g{Tensor<T>(y.shape()),
               {{std::move(conv_grads.grad_weights),
                 std::move(conv_grads.grad_bias), p.conv.geometry}}};
  const Tensor<T>& gs = conv_grads.grad_input;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t k = 0; k < d.plane(); ++k) {
      const T a = cache.attention[n * d.plane() + k];
      const T g_mean = gs[n * 2 * d.plane() + k] / static_cast<T>(d.c);
      const T g_max = gs[n * 2 * d.plane() + d.plane() + k];
      // Max subgradient goes to the first maximising channel.
      std::size_t arg = 0;
      T best = y[n * d.image() + k];
      for (std::size_t c = 1; c < d.c; ++c) {
        const T v = y[n * d.image() + c * d.plane() + k];
        if (v > best) {
          best = v;
          arg = c;
        }
      }
      for (std::size_t c = 0; c < d.c; ++c) {
        const std::size_t i = n * d.image() + c * d.plane() + k;
        g.grad_input[i] = grad_out[i] * a + g_mean + (c == arg ? g_max : T(0));
      }
    }
  return g;
}

#define IKM_INSTANTIATE_ATTENTION(T)                                          \
  template struct CaParams<T>;                                                \
  template struct SaParams<T>;                                                \
  template CaParams<T> make_ca_params<T>(std::size_t, std::size_t);           \
  template SaParams<T> make_sa_params<T>(std::size_t);                        \
  template CaForward<T> channel_attention_forward(const Tensor<T>&,           \
                                                  const CaParams<T>&);        \
  template CaGrads<T> channel_attention_backward(                             \
      const CaCache<T>&, const CaParams<T>&, const Tensor<T>&);               \
  template SaForward<T> spatial_attention_forward(const Tensor<T>&,           \
                                                  const SaParams<T>&);        \
  template SaGrads<T> spatial_attention_backward(                             \
      const SaCache<T>&, const SaParams<T>&, const Tensor<T>&);

IKM_INSTANTIATE_ATTENTION(float)
IKM_INSTANTIATE_ATTENTION(double)

}  // namespace ikm
