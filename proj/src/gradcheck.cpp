#include "ikm/gradcheck.hpp"

#include <random>

#include "ikm/attention.hpp"
#include "ikm/ikm.hpp"
#include "ikm/model.hpp"

namespace ikm {
namespace {

using Rng = std::mt19937_64;
using T = Tensor<double>;

T random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  T t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

// Keeps inputs away from the attention threshold so the piecewise-constant
// attention cannot switch inside the difference stencil.
T input_tensor(Shape shape, Rng& rng) {
  T t = random_tensor(std::move(shape), rng);
  for (double& v : t.values())
    if (std::abs(v) < 1e-2) v = v < 0 ? v - 1e-2 : v + 1e-2;
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

ConvParams<double> random_conv(std::size_t c_in, std::size_t c_out,
                               std::size_t k, std::size_t dilation, Rng& rng) {
  ConvParams<double> p = make_conv_params<double>(c_in, c_out, k, dilation);
  p.weights = random_tensor(p.weights.shape(), rng, 0.5);
  p.bias = random_tensor(p.bias.shape(), rng, 0.5);
  return p;
}

// Checks a loss against the analytic gradient of one tensor that the loss
// reads by reference.
double check_slot(T& slot, const std::function<double()>& loss,
                  const T& analytic, double step) {
  const T saved = slot;
  auto f = [&](const T& v) {
    slot = v;
    const double out = loss();
    slot = saved;
    return out;
  };
  return finite_diff_check(f, saved, analytic, step);
}

double conv_trial(Rng& rng, double step, bool modulated) {
  const std::size_t k = modulated ? 3 : std::array<std::size_t, 3>{1, 3, 5}[pick(rng, 0, 2)];
  const std::size_t d = pick(rng, 1, 2);
  const std::size_t b = pick(rng, 1, 3), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
  const std::size_t span = receptive_extent(k, d);
  T x = input_tensor({b, ci, span + pick(rng, 0, 3), span + pick(rng, 0, 3)}, rng);
  ConvParams<double> p = random_conv(ci, co, k, d, rng);
  const T r = random_tensor({b, co, x.dim(2), x.dim(3)}, rng);
  const CagConfig cag = CagConfig::for_kernel(k, k, d, 0.0);

  auto loss = [&] {
    return dot(r, modulated ? ikm_conv_forward(x, p, cag).output
                            : conv2d_forward(x, p));
  };
  GradPack<double> g =
      modulated ? ikm_conv_backward(ikm_conv_forward(x, p, cag).cache, p, r)
                : conv2d_backward(x, p, r);
  return std::max({check_slot(x, loss, g.grad_input, step),
                   check_slot(p.weights, loss, g.grad_weights, step),
                   check_slot(p.bias, loss, g.grad_bias, step)});
}

double ca_trial(Rng& rng, double step) {
  const std::size_t b = pick(rng, 1, 3), c = pick(rng, 2, 6);
  const std::size_t red = pick(rng, 1, 3);
  T x = random_tensor({b, c, pick(rng, 2, 5), pick(rng, 2, 5)}, rng);
  CaParams<double> p = make_ca_params<double>(c, red);
  for (T* t : {&p.fc1_weights, &p.fc1_bias, &p.fc2_weights, &p.fc2_bias})
    *t = random_tensor(t->shape(), rng, 0.7);
  const T r = random_tensor(x.shape(), rng);
  auto loss = [&] { return dot(r, channel_attention(x, p)); };
  const CaGrads<double> g =
      channel_attention_backward(channel_attention_forward(x, p).cache, p, r);
  return std::max({check_slot(x, loss, g.grad_input, step),
                   check_slot(p.fc1_weights, loss, g.grad_params.fc1_weights, step),
                   check_slot(p.fc1_bias, loss, g.grad_params.fc1_bias, step),
                   check_slot(p.fc2_weights, loss, g.grad_params.fc2_weights, step),
                   check_slot(p.fc2_bias, loss, g.grad_params.fc2_bias, step)});
}

double sa_trial(Rng& rng, double step) {
  const std::size_t b = pick(rng, 1, 2), c = pick(rng, 1, 4);
  const std::size_t k = std::array<std::size_t, 3>{3, 5, 7}[pick(rng, 0, 2)];
  T x = random_tensor({b, c, pick(rng, 3, 6), pick(rng, 3, 6)}, rng);
  SaParams<double> p{random_conv(2, 1, k, 1, rng)};
  const T r = random_tensor(x.shape(), rng);
  auto loss = [&] { return dot(r, spatial_attention(x, p)); };
  const SaGrads<double> g =
      spatial_attention_backward(spatial_attention_forward(x, p).cache, p, r);
  return std::max({check_slot(x, loss, g.grad_input, step),
                   check_slot(p.conv.weights, loss, g.grad_params.conv.weights, step),
                   check_slot(p.conv.bias, loss, g.grad_params.conv.bias, step)});
}

// Runs a module-level check: forward/backward through a layer object whose
// parameters are exposed as ParamRefs.
template <typename Layer>
double module_trial(Layer& layer, Rng& rng, double step, Shape in_shape) {
  std::vector<ParamRef<double>> params;
  layer.collect(params);
  for (auto& p : params) *p.value = random_tensor(p.value->shape(), rng, 0.4);
  T x = input_tensor(std::move(in_shape), rng);
  const T probe = layer.forward(x, Optimization::iso);
  const T r = random_tensor(probe.shape(), rng);
  auto loss = [&] { return dot(r, layer.forward(x, Optimization::iso)); };
  for (auto& p : params) p.grad->fill(0.0);
  layer.forward(x, Optimization::iso);
  const T grad_x = layer.backward(r);
  double worst = check_slot(x, loss, grad_x, step);
  for (auto& p : params) {
    const T analytic = *p.grad;
    worst = std::max(worst, check_slot(*p.value, loss, analytic, step));
  }
  return worst;
}

UhdnConfig small_config(Rng& rng) {
  UhdnConfig cfg;
  cfg.channels = pick(rng, 2, 3);
  cfg.block.growth = 2;
  cfg.attention = AttentionMode::none;
  return cfg;
}

}  // namespace

double gradcheck_trial(const std::string& layer, std::uint64_t seed,
                       double step) {
  Rng rng(seed);
  if (layer == "conv") return conv_trial(rng, step, false);
  if (layer == "ikm") return conv_trial(rng, step, true);
  if (layer == "ca") return ca_trial(rng, step);
  if (layer == "sa") return sa_trial(rng, step);
  if (layer == "dense") {
    UhdnConfig cfg = small_config(rng);
    DenseUnit<double> unit("unit", cfg.channels, pick(rng, 1, 3), cfg.channels, cfg);
    return module_trial(unit, rng, step,
                        {pick(rng, 1, 2), cfg.channels, pick(rng, 3, 5), pick(rng, 3, 5)});
  }
  if (layer == "uhdb") {
    UhdnConfig cfg = small_config(rng);
    cfg.block.depths = pick(rng, 0, 1) ? std::vector<std::size_t>{2, 1, 1, 2}
                                       : std::vector<std::size_t>{1, 1};
    Uhdb<double> block("block", cfg);
    return module_trial(block, rng, step,
                        {pick(rng, 1, 2), cfg.channels, pick(rng, 3, 5), pick(rng, 3, 5)});
  }
  throw ConfigError("unknown gradcheck layer '" + layer +
                    "' (expected ikm, conv, ca, sa, dense or uhdb)");
}

}  // namespace ikm
