#include <gtest/gtest.h>

#include <map>
#include <random>

#include "ikm/accounting.hpp"
#include "ikm/gradcheck.hpp"
#include "ikm/model.hpp"
#include "support/oracles.hpp"
#include "support/random.hpp"

namespace ikm {
namespace {

using testing::direct_conv;
using testing::random_tensor;

using Params = std::map<std::string, Tensor<double>*>;

template <typename Layer>
Params params_of(Layer& layer) {
  std::vector<ParamRef<double>> refs;
  layer.collect(refs);
  Params m;
  for (auto& r : refs) m[r.name] = r.value;
  return m;
}

Params params_of(Uhdn<double>& model) {
  Params m;
  for (auto& r : model.parameters()) m[r.name] = r.value;
  return m;
}

void randomize(const Params& params, std::mt19937_64& rng, double scale = 0.3) {
  for (auto& [name, t] : params) *t = random_tensor<double>(t->shape(), rng, -scale, scale);
}

UhdnConfig small_config(AttentionMode mode = AttentionMode::none) {
  UhdnConfig cfg;
  cfg.blocks = 1;
  cfg.block.depths = {2, 1, 1, 2};
  cfg.block.growth = 3;
  cfg.channels = 4;
  cfg.upscale_channels = 4;
  cfg.attention = mode;
  return cfg;
}

Tensor<double> concat(const std::vector<Tensor<double>>& parts) {
  std::size_t c = 0;
  for (const auto& p : parts) c += p.dim(1);
  const auto& s = parts.front().shape();
  Tensor<double> out({s[0], c, s[2], s[3]});
  std::size_t at = 0;
  for (const auto& p : parts) {
    write_channels(out, p, at);
    at += p.dim(1);
  }
  return out;
}

Tensor<double> conv_same(const Tensor<double>& x, const Params& p,
                         const std::string& name) {
  const auto& w = *p.at(name + ".weight");
  return direct_conv(x, w, *p.at(name + ".bias"), {1, 1, (w.dim(2) - 1) / 2});
}

// Hand-unrolled dense unit: grow a concatenation with relu(conv3) outputs,
// close with the 1x1 transition.
Tensor<double> unrolled_dense(const Tensor<double>& x, const Params& p,
                              const std::string& name, std::size_t depth) {
  std::vector<Tensor<double>> feats{x};
  for (std::size_t l = 0; l < depth; ++l)
    feats.push_back(relu(conv_same(concat(feats), p,
                                   name + ".layers." + std::to_string(l) + ".conv")));
  return conv_same(concat(feats), p, name + ".transition");
}

TEST(DenseUnit, DepthOneUnrolled) {
  std::mt19937_64 rng(1);
  const auto cfg = small_config();
  DenseUnit<double> unit("u", 4, 1, 5, cfg);
  const auto p = params_of(unit);
  randomize(p, rng);
  EXPECT_EQ(p.at("u.transition.weight")->dim(1), 4u + 3u);
  auto x = random_tensor<double>({2, 4, 6, 5}, rng);
  const auto y = unit.forward(x, Optimization::iso);
  const auto inner = relu(conv_same(x, p, "u.layers.0.conv"));
  EXPECT_LE(max_abs_diff(y, conv_same(concat({x, inner}), p, "u.transition")), 1e-12);
}

TEST(DenseUnit, ZeroWeightsGiveZeros) {
  std::mt19937_64 rng(2);
  DenseUnit<double> unit("u", 4, 3, 4, small_config());
  const auto y = unit.forward(random_tensor<double>({1, 4, 5, 5}, rng), Optimization::iso);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(DenseUnit, DepthTwoMatchesUnrolledOracle) {
  std::mt19937_64 rng(3);
  DenseUnit<double> unit("u", 4, 2, 4, small_config());
  const auto p = params_of(unit);
  randomize(p, rng);
  auto x = random_tensor<double>({2, 4, 7, 6}, rng);
  EXPECT_LE(max_abs_diff(unit.forward(x, Optimization::iso), unrolled_dense(x, p, "u", 2)),
            1e-6);
}

TEST(DenseUnit, ModulatedCompositesUseAttention) {
  std::mt19937_64 rng(4);
  const auto cfg = small_config(AttentionMode::ikm);
  DenseUnit<double> unit("u", 4, 1, 4, cfg);
  const auto p = params_of(unit);
  randomize(p, rng);
  auto x = random_tensor<double>({1, 4, 6, 6}, rng);
  const auto a = cag_generate(x, cfg.cag());
  auto w = *p.at("u.layers.0.conv.weight");
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t k = 0; k < 36; ++k) w[j * 36 + k] *= a.values[k];
  const auto inner = relu(direct_conv(x, w, *p.at("u.layers.0.conv.bias"), {1, 1, 1}));
  EXPECT_LE(max_abs_diff(unit.forward(x, Optimization::iso),
                         conv_same(concat({x, inner}), p, "u.transition")),
            1e-12);
  const auto convs = unit.conv_layers();
  EXPECT_TRUE(convs.front()->modulated());
  EXPECT_FALSE(convs.back()->modulated());
}

TEST(Uhdb, ZeroUnitsAreIdentity) {
  std::mt19937_64 rng(5);
  Uhdb<double> block("b", small_config());
  auto x = random_tensor<double>({2, 4, 5, 5}, rng);
  EXPECT_EQ(block.forward(x, Optimization::iso), x);
}

TEST(Uhdb, TwoUnits) {
  std::mt19937_64 rng(6);
  auto cfg = small_config();
  cfg.block.depths = {2, 2};
  Uhdb<double> block("b", cfg);
  const auto p = params_of(block);
  randomize(p, rng);
  auto x = random_tensor<double>({1, 4, 6, 6}, rng);
  const auto f1 = unrolled_dense(x, p, "b.units.0", 2);
  const auto expect = add(x, unrolled_dense(f1, p, "b.units.1", 2));
  EXPECT_LE(max_abs_diff(block.forward(x, Optimization::iso), expect), 1e-12);
}

TEST(Uhdb, FourUnitsMatchUnrolledOracle) {
  std::mt19937_64 rng(7);
  const auto cfg = small_config();
  Uhdb<double> block("b", cfg);
  const auto p = params_of(block);
  randomize(p, rng);
  auto x = random_tensor<double>({2, 4, 6, 7}, rng);
  auto F = [&](std::size_t m, const Tensor<double>& v) {
    return unrolled_dense(v, p, "b.units." + std::to_string(m - 1), cfg.block.depths[m - 1]);
  };
  const auto a1 = F(1, x);
  const auto expect = add(x, F(4, add(a1, F(3, F(2, a1)))));
  EXPECT_LE(max_abs_diff(block.forward(x, Optimization::iso), expect), 1e-6);
}

TEST(Uhdb, SixUnitsMatchUnrolledOracle) {
  std::mt19937_64 rng(8);
  auto cfg = small_config();
  cfg.block.depths = {2, 1, 1, 1, 1, 2};
  Uhdb<double> block("b", cfg);
  const auto p = params_of(block);
  randomize(p, rng);
  auto x = random_tensor<double>({1, 4, 5, 5}, rng);
  auto F = [&](std::size_t m, const Tensor<double>& v) {
    return unrolled_dense(v, p, "b.units." + std::to_string(m - 1), cfg.block.depths[m - 1]);
  };
  const auto a1 = F(1, x);
  const auto a2 = F(2, a1);
  const auto a3 = F(3, a2);
  const auto expect = add(x, F(6, add(a1, F(5, add(a2, F(4, a3))))));
  EXPECT_LE(max_abs_diff(block.forward(x, Optimization::iso), expect), 1e-12);
}

TEST(Uhdb, PlainChainVariant) {
  std::mt19937_64 rng(9);
  auto cfg = small_config();
  cfg.block.u_style = false;
  cfg.block.depths = {1, 2, 1};
  Uhdb<double> block("b", cfg);
  const auto p = params_of(block);
  randomize(p, rng);
  auto x = random_tensor<double>({1, 4, 5, 5}, rng);
  auto h = unrolled_dense(x, p, "b.units.0", 1);
  h = unrolled_dense(h, p, "b.units.1", 2);
  h = unrolled_dense(h, p, "b.units.2", 1);
  EXPECT_LE(max_abs_diff(block.forward(x, Optimization::iso), add(x, h)), 1e-12);
}

TEST(Uhdb, PreservesShape) {
  std::mt19937_64 rng(10);
  Uhdb<double> block("b", small_config(AttentionMode::ikm));
  randomize(params_of(block), rng);
  auto x = random_tensor<double>({3, 4, 7, 9}, rng);
  EXPECT_EQ(block.forward(x, Optimization::iso).shape(), x.shape());
}

TEST(Uhdb, BackwardFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    EXPECT_LT(gradcheck_trial("dense", seed), 1e-4);
    EXPECT_LT(gradcheck_trial("uhdb", seed), 1e-4);
  }
}

TEST(UhdnConfig, Validation) {
  UhdnConfig cfg;
  cfg.block.depths = {1, 2, 1};
  EXPECT_THROW(cfg.validate(), ConfigError);  // odd M
  cfg.block.depths = {1, 2, 2, 3};
  EXPECT_THROW(cfg.validate(), ConfigError);  // asymmetric
  cfg.block.depths = {4, 5, 6, 6, 5, 4};
  EXPECT_NO_THROW(cfg.validate());
  cfg.scale = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_attention_mode("nonlocal"), ConfigError);
  EXPECT_EQ(parse_attention_mode("vanilla"), AttentionMode::none);
  EXPECT_THROW(parse_optimization("sgd"), ConfigError);
}

TEST(UhdnConfig, UpscaleStages) {
  UhdnConfig cfg;
  cfg.scale = 2;
  EXPECT_EQ(cfg.upscale_stages(), (std::vector<std::size_t>{2}));
  cfg.scale = 3;
  EXPECT_EQ(cfg.upscale_stages(), (std::vector<std::size_t>{3}));
  cfg.scale = 4;
  EXPECT_EQ(cfg.upscale_stages(), (std::vector<std::size_t>{2, 2}));
}

TEST(Uhdn, ZeroWeightsOutputMeanImage) {
  auto cfg = small_config(AttentionMode::ikm);
  Uhdn<double> model(cfg, {{0.4, 0.5, 0.6}});
  std::mt19937_64 rng(11);
  const auto y = model.forward(random_tensor<double>({1, 3, 24, 24}, rng), Optimization::iso);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 48, 48}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t k = 0; k < 48 * 48; ++k)
      EXPECT_EQ(y[c * 48 * 48 + k], model.stats().mean_rgb[c]);
}

TEST(Uhdn, OutputShapesPerScale) {
  std::mt19937_64 rng(12);
  for (std::size_t s : {2, 3, 4}) {
    auto cfg = small_config(AttentionMode::ikm);
    cfg.scale = s;
    Uhdn<double> model(cfg);
    model.initialize(3);
    const auto y = model.forward(random_tensor<double>({2, 3, 10, 12}, rng), Optimization::iso);
    EXPECT_EQ(y.shape(), (Shape{2, 3, 10 * s, 12 * s}));
  }
}

TEST(Uhdn, ZeroBlocksLeaveHeadTrunkPipeline) {
  std::mt19937_64 rng(13);
  auto cfg = small_config();
  cfg.scale = 4;
  Uhdn<double> model(cfg, {{0.1, 0.2, 0.3}});
  const auto p = params_of(model);
  for (auto& [name, t] : p)
    if (name.rfind("blocks.", 0) != 0) *t = random_tensor<double>(t->shape(), rng, -0.3, 0.3);
  auto x = random_tensor<double>({1, 3, 6, 6}, rng);
  const auto head = conv_same(x, p, "head");
  auto t = add(conv_same(head, p, "trunk"), head);
  t = conv_same(t, p, "reduce");
  t = pixel_shuffle(conv_same(t, p, "upscale.0"), 2);
  t = pixel_shuffle(conv_same(t, p, "upscale.1"), 2);
  auto y = conv_same(t, p, "tail");
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t k = 0; k < 24 * 24; ++k) y[c * 576 + k] += model.stats().mean_rgb[c];
  EXPECT_LE(max_abs_diff(model.forward(x, Optimization::iso), y), 1e-12);
}

TEST(Uhdn, BackwardFiniteDifferences) {
  for (auto mode : {AttentionMode::none, AttentionMode::ikm, AttentionMode::channel,
                    AttentionMode::spatial}) {
    auto cfg = small_config(mode);
    cfg.block.depths = {1, 1};
    cfg.sa_kernel = 3;
    Uhdn<double> model(cfg);
    model.initialize(21);
    std::mt19937_64 rng(14);
    auto x = random_tensor<double>({2, 3, 6, 6}, rng);
    for (auto& v : x.values()) v += v >= 0 ? 0.05 : -0.05;  // clear of the threshold
    const auto r = random_tensor<double>({2, 3, 12, 12}, rng);
    model.zero_grad();
    model.forward(x, Optimization::iso);
    const auto gx = model.backward(r);
    auto loss = [&] { return dot(model.forward(x, Optimization::iso), r); };
    EXPECT_LT(finite_diff_check(
                  [&](const Tensor<double>& xx) {
                    return dot(model.forward(xx, Optimization::iso), r);
                  },
                  x, gx),
              1e-4)
        << to_string(mode);
    for (auto& ref : model.parameters()) {
      const Tensor<double> analytic = *ref.grad;
      const double err = finite_diff_check(
          [&](const Tensor<double>& v) {
            const Tensor<double> keep = *ref.value;
            *ref.value = v;
            const double l = loss();
            *ref.value = keep;
            return l;
          },
          *ref.value, analytic);
      EXPECT_LT(err, 1e-4) << to_string(mode) << " " << ref.name;
    }
  }
}

TEST(Uhdn, IkmKeepsParameterInventory) {
  for (std::size_t s : {2, 3, 4}) {
    auto cfg = small_config(AttentionMode::none);
    cfg.scale = s;
    Uhdn<double> vanilla(cfg);
    cfg.attention = AttentionMode::ikm;
    Uhdn<double> ikm(cfg);
    const auto a = vanilla.parameters(), b = ikm.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].name, b[i].name);
      EXPECT_EQ(a[i].value->shape(), b[i].value->shape());
    }
  }
}

TEST(Uhdn, ModulatedLayerPlacement) {
  Uhdn<double> model(small_config(AttentionMode::ikm));
  for (auto* conv : model.conv_layers()) {
    const std::string& n = conv->name();
    const bool expect = n == "head" || n == "trunk" || n.find(".layers.") != std::string::npos;
    EXPECT_EQ(conv->modulated(), expect) << n;
  }
}

TEST(Uhdn, HeInitialisationStatistics) {
  UhdnConfig cfg;
  Uhdn<float> model(cfg);
  model.initialize(5);
  for (auto& ref : model.parameters()) {
    if (ref.value->rank() == 1) {
      for (float v : ref.value->values()) EXPECT_EQ(v, 0.0f);
      continue;
    }
    if (ref.value->size() < 20000) continue;
    const double fan_in = static_cast<double>(ref.value->size() / ref.value->dim(0));
    double s = 0, ss = 0;
    for (float v : ref.value->values()) {
      s += v;
      ss += double(v) * v;
    }
    const double n = static_cast<double>(ref.value->size());
    EXPECT_NEAR(s / n, 0.0, 5 * std::sqrt(2 / fan_in / n)) << ref.name;
    EXPECT_NEAR(ss / n / (2 / fan_in), 1.0, 0.05) << ref.name;
  }
}

TEST(Accounting, SingleHeadConvClosedForm) {
  ConvLayer<double> conv("head", 3, 64, 3, 1, false, 0.0);
  std::vector<ParamRef<double>> refs;
  conv.collect(refs);
  EXPECT_EQ(refs[0].value->size() + refs[1].value->size(), 1792u);
  EXPECT_EQ(64ull * 64 * 9 * 480 * 360, 6370099200ull);
}

// MACs summed over the instantiated conv layers at their actual spatial size.
std::uint64_t macs_from_model(Uhdn<double>& model, std::size_t out_h, std::size_t out_w) {
  const auto& cfg = model.config();
  const std::size_t s = cfg.scale;
  const auto stages = cfg.upscale_stages();
  std::uint64_t total = 0;
  std::size_t stage = 0, res = 1;
  for (auto* conv : model.conv_layers()) {
    const auto& w = conv->params().weights;
    std::size_t h = out_h / s * res, wd = out_w / s * res;
    if (conv->name() == "tail") h = out_h, wd = out_w;
    if (conv->name().rfind("upscale.", 0) == 0) res *= stages[stage++];
    total += static_cast<std::uint64_t>(w.size()) * h * wd;
  }
  return total;
}

TEST(Accounting, CountsMatchInstantiatedModels) {
  std::vector<UhdnConfig> cfgs;
  for (std::size_t s : {2, 3, 4})
    for (std::size_t up : {0, 16})
      for (bool trunk : {true, false}) {
        UhdnConfig c;
        c.scale = s;
        c.blocks = 2;
        c.block.depths = {3, 2, 2, 3};
        c.channels = 24;
        c.block.growth = 6;
        c.upscale_channels = up;
        c.trunk_conv = trunk;
        cfgs.push_back(c);
      }
  for (const auto& c : cfgs) {
    Uhdn<double> model(c);
    EXPECT_EQ(count_params(c), model.parameter_count());
    EXPECT_EQ(count_macs(c, 360, 480), macs_from_model(model, 360, 480));
    for (auto mode : {AttentionMode::none, AttentionMode::channel, AttentionMode::spatial}) {
      auto v = c;
      v.attention = mode;
      Uhdn<double> m(v);
      EXPECT_EQ(count_params(v), m.parameter_count());
    }
  }
  UhdnConfig c;
  EXPECT_THROW(count_macs(c, 361, 480), ConfigError);
}

TEST(Accounting, IkmAddsNothing) {
  UhdnConfig cfg;
  for (std::size_t s : {2, 3, 4}) {
    cfg.scale = s;
    cfg.attention = AttentionMode::ikm;
    const auto with = count_params(cfg);
    const auto macs = count_macs(cfg, 360, 480);
    cfg.attention = AttentionMode::none;
    EXPECT_EQ(with, count_params(cfg));
    EXPECT_EQ(macs, count_macs(cfg, 360, 480));
  }
}

TEST(Accounting, LightweightConfigNearPublishedBudget) {
  UhdnConfig cfg;  // N=4, M=6, depths [6,5,4,4,5,6], g=12, C=64
  cfg.scale = 2;
  EXPECT_NEAR(static_cast<double>(count_params(cfg)), 1390.9e3, 0.03 * 1390.9e3);
  EXPECT_NEAR(static_cast<double>(count_macs(cfg, 360, 480)), 60.3e9, 0.05 * 60.3e9);
  cfg.scale = 4;
  EXPECT_NEAR(static_cast<double>(count_macs(cfg, 360, 480)), 15.7e9, 0.10 * 15.7e9);
}

}  // namespace
}  // namespace ikm
