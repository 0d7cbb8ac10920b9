#include "ikm/train.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace ikm {

const char* to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::f32;
  if (s == "f64") return Dtype::f64;
  throw ConfigError("unknown dtype '" + s + "' (expected f32 or f64)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr0 > 0) || !std::isfinite(lr0))
    throw ConfigError("train.lr must be positive");
  if (halving_period == 0)
    throw ConfigError("train.halving_period must be positive");
  if (patch == 0) throw ConfigError("train.patch must be positive");
  if (log_interval == 0) throw ConfigError("train.log_interval must be positive");
}

double learning_rate(double lr0, std::size_t period, std::size_t step) {
  return std::ldexp(lr0, -static_cast<int>(step / period));
}

template <Real T>
Loss<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "mae_loss");
  if (pred.empty()) throw ShapeError("mae_loss: empty tensors");
  const T inv = T(1) / static_cast<T>(pred.size());
  Loss<T> l{0.0, Tensor<T>(pred.shape())};
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    total += std::abs(static_cast<double>(d));
    l.grad[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
  }
  l.value = total / static_cast<double>(pred.size());
  return l;
}

template <Real T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state,
               double lr) {
  for (const auto& p : params)
    if (!all_finite(*p.grad))
      throw NumericError("non-finite gradient in parameter '" + p.name + "'");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value->shape());
      state.v.emplace_back(p.value->shape());
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& w = *params[k].value;
    const Tensor<T>& g = *params[k].grad;
    Tensor<T>& m = state.m[k];
    Tensor<T>& v = state.v[k];
    require_same_shape(w, m, "adam_step");
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double mh = static_cast<double>(m[i]) / c1;
      const double vh = static_cast<double>(v[i]) / c2;
      w[i] -= static_cast<T>(lr * mh / (std::sqrt(vh) + state.eps));
    }
  }
}

void write_log_header(std::ostream& out) {
  out << "step,lr,train_mae,wall_ms\n";
}

void write_log_row(std::ostream& out, const LogRow& r) {
  out << r.step << ',' << std::setprecision(9) << r.lr << ','
      << std::setprecision(17) << r.train_mae << ',' << std::fixed
      << std::setprecision(3) << r.wall_ms << std::defaultfloat << '\n';
}

namespace {

template <Real T>
Tensor<T> to_batch(const std::vector<const Image*>& images,
                   const DatasetStats* stats) {
  std::vector<Tensor<T>> items;
  items.reserve(images.size());
  for (const Image* img : images)
    items.push_back(tensor_cast<T>(stats ? normalize(*img, *stats) : *img));
  return stack_batch<T>(items);
}

}  // namespace

template <Real T>
std::vector<LogRow> train(Uhdn<T>& model, std::span<const ImagePair> pairs,
                          const TrainConfig& cfg,
                          const std::function<void(const LogRow&)>& on_row) {
  cfg.validate();
  if (pairs.empty()) throw DataError("training set is empty");
  for (const auto& p : pairs)
    if (p.scale != model.config().scale)
      throw DataError("training pair '" + p.source + "' has scale " +
                      std::to_string(p.scale) + ", model expects " +
                      std::to_string(model.config().scale));
  std::seed_seq seq{cfg.seed, std::uint64_t{0x5eed}};
  Rng rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);

  std::vector<PatchPair> fixed;
  for (std::size_t i = 0; i < cfg.fixed_patches; ++i)
    fixed.push_back(sample_patch_pair(pairs[i % pairs.size()], cfg.patch, rng));

  auto params = model.parameters();
  AdamState<T> adam;
  std::vector<LogRow> rows;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    std::vector<PatchPair> drawn;
    std::vector<const Image*> lr_ptrs, hr_ptrs;
    if (!fixed.empty()) {
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        const PatchPair& p = fixed[(s * cfg.batch_size + i) % fixed.size()];
        lr_ptrs.push_back(&p.lr);
        hr_ptrs.push_back(&p.hr);
      }
    } else {
      drawn.reserve(cfg.batch_size);
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        drawn.push_back(sample_patch_pair(pairs[pick(rng)], cfg.patch, rng));
        if (cfg.augment) augment(drawn.back(), rng);
      }
      for (const auto& p : drawn) {
        lr_ptrs.push_back(&p.lr);
        hr_ptrs.push_back(&p.hr);
      }
    }
    const Tensor<T> lr = to_batch<T>(lr_ptrs, &model.stats());
    const Tensor<T> hr = to_batch<T>(hr_ptrs, nullptr);

    const double rate = learning_rate(cfg.lr0, cfg.halving_period, s);
    model.zero_grad();
    const Tensor<T> pred = model.forward(lr, cfg.optimization);
    Loss<T> loss = mae_loss(pred, hr);
    if (!std::isfinite(loss.value))
      throw NumericError("non-finite training loss at step " + std::to_string(s));
    model.backward(loss.grad);
    adam_step<T>(params, adam, rate);

    if (s % cfg.log_interval == 0 || s + 1 == cfg.steps) {
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
      rows.push_back({s, rate, loss.value, ms});
      if (on_row) on_row(rows.back());
    }
  }
  return rows;
}

Image luminance(const Image& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3)
    throw ShapeError("luminance: expected 3 x H x W, got " +
                     to_string(rgb.shape()));
  const std::size_t h = rgb.dim(1), w = rgb.dim(2), n = h * w;
  Image y({1, h, w});
  for (std::size_t k = 0; k < n; ++k)
    y[k] = 16.0 + 65.481 * rgb[k] + 128.553 * rgb[n + k] + 24.966 * rgb[2 * n + k];
  return y;
}

namespace {

Image cropped_luma(const Image& x, std::size_t border, const char* what) {
  const Image y = luminance(x);
  const std::size_t h = y.dim(1), w = y.dim(2);
  if (2 * border >= h || 2 * border >= w)
    throw ShapeError(std::string(what) + ": border " + std::to_string(border) +
                     " leaves no pixels in " + to_string(x.shape()));
  return crop(y, border, border, h - 2 * border, w - 2 * border);
}

// Valid-mode separable filtering of a 1 x H x W image.
Image filter_valid(const Image& x, const std::vector<double>& k) {
  const std::size_t h = x.dim(1), w = x.dim(2), r = k.size();
  const std::size_t oh = h - r + 1, ow = w - r + 1;
  Image mid({1, h, ow});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < r; ++t) s += k[t] * x[i * w + j + t];
      mid[i * ow + j] = s;
    }
  Image out({1, oh, ow});
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < r; ++t) s += k[t] * mid[(i + t) * ow + j];
      out[i * ow + j] = s;
    }
  return out;
}

}  // namespace

double psnr(const Image& pred, const Image& target, std::size_t border) {
  require_same_shape(pred, target, "psnr");
  const Image a = cropped_luma(pred, border, "psnr");
  const Image b = cropped_luma(target, border, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  if (se == 0) return kInfinitePsnr;
  const double mse = se / static_cast<double>(a.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image& pred, const Image& target, std::size_t border) {
  require_same_shape(pred, target, "ssim");
  constexpr std::size_t win = 11;
  constexpr double sigma = 1.5;
  const Image a = cropped_luma(pred, border, "ssim");
  const Image b = cropped_luma(target, border, "ssim");
  if (a.dim(1) < win || a.dim(2) < win)
    throw ShapeError("ssim: image smaller than the 11x11 window");
  std::vector<double> k(win);
  double ks = 0;
  for (std::size_t i = 0; i < win; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    k[i] = std::exp(-d * d / (2 * sigma * sigma));
    ks += k[i];
  }
  for (double& v : k) v /= ks;

  Image aa = a, bb = b, ab = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const Image mu_a = filter_valid(a, k), mu_b = filter_valid(b, k);
  const Image e_aa = filter_valid(aa, k), e_bb = filter_valid(bb, k),
              e_ab = filter_valid(ab, k);
  const double c1 = std::pow(0.01 * 255.0, 2), c2 = std::pow(0.03 * 255.0, 2);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb,
                 cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

template <Real T>
Predictor model_predictor(Uhdn<T>& model, Optimization opt) {
  return [&model, opt](const Image& lr) {
    const Image norm = normalize(lr, model.stats());
    Tensor<T> x = tensor_cast<T>(norm);
    x.reshape({1, norm.dim(0), norm.dim(1), norm.dim(2)});
    Image y = tensor_cast<double>(model.forward(x, opt));
    y.reshape({y.dim(1), y.dim(2), y.dim(3)});
    if (!all_finite(y)) throw NumericError("model produced non-finite output");
    for (double& v : y.values()) v = std::clamp(v, 0.0, 1.0);
    return y;
  };
}

Predictor bicubic_predictor(std::size_t scale) {
  return [scale](const Image& lr) {
    Image y = bicubic_resize(lr, lr.dim(1) * scale, lr.dim(2) * scale);
    for (double& v : y.values()) v = std::clamp(v, 0.0, 1.0);
    return y;
  };
}

EvalReport evaluate(const Predictor& predict, std::span<const ImagePair> pairs,
                    std::size_t border) {
  if (pairs.empty()) throw DataError("evaluation set is empty");
  EvalReport r;
  r.border = border;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& p : pairs) {
    const Image out = predict(p.lr);
    if (out.shape() != p.hr.shape())
      throw ShapeError("prediction " + to_string(out.shape()) + " for '" +
                       p.source + "' does not match HR " +
                       to_string(p.hr.shape()));
    r.rows.push_back({p.source, psnr(out, p.hr, border), ssim(out, p.hr, border)});
    r.mean_psnr += r.rows.back().psnr_db;
    r.mean_ssim += r.rows.back().ssim;
  }
  r.mean_psnr /= static_cast<double>(pairs.size());
  r.mean_ssim /= static_cast<double>(pairs.size());
  r.wall_ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - start)
                  .count();
  return r;
}

void write_eval_csv(std::ostream& out, const EvalReport& r) {
  out << "# luma border crop " << r.border << " px\n";
  out << "image,psnr_db,ssim\n" << std::setprecision(10);
  for (const auto& row : r.rows)
    out << row.image << ',' << row.psnr_db << ',' << row.ssim << '\n';
  out << "mean," << r.mean_psnr << ',' << r.mean_ssim << '\n';
}

#define IKM_INSTANTIATE_TRAIN(T)                                              \
  template Loss<T> mae_loss(const Tensor<T>&, const Tensor<T>&);              \
  template void adam_step(std::span<const ParamRef<T>>, AdamState<T>&,        \
                          double);                                            \
  template std::vector<LogRow> train(Uhdn<T>&, std::span<const ImagePair>,    \
                                     const TrainConfig&,                      \
                                     const std::function<void(const LogRow&)>&); \
  template Predictor model_predictor(Uhdn<T>&, Optimization);

IKM_INSTANTIATE_TRAIN(float)
IKM_INSTANTIATE_TRAIN(double)

}  // namespace ikm
