#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ikm/data.hpp"
#include "ikm/model.hpp"

namespace ikm {

enum class Dtype { f32, f64 };
const char* to_string(Dtype d);
Dtype parse_dtype(const std::string& s);

struct TrainConfig {
  std::size_t batch_size = 16;
  double lr0 = 1e-4;
  std::size_t halving_period = 100000;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  Optimization optimization = Optimization::iso;
  Dtype dtype = Dtype::f32;
  std::size_t patch = 48;  // LR patch side
  // > 0: draw this many patches once and cycle through them without
  // augmentation (overfitting protocol). 0: fresh random patches each step.
  std::size_t fixed_patches = 0;
  bool augment = true;
  std::size_t log_interval = 100;

  void validate() const;
};

// lr0 * 2^-floor(step / period)
double learning_rate(double lr0, std::size_t period, std::size_t step);

template <Real T>
struct Loss {
  double value;
  Tensor<T> grad;
};

// Mean absolute error; grad = sign(pred - target) / count, sign(0) = 0.
template <Real T>
Loss<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <Real T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m, v;
};

// Bias-corrected Adam. Throws NumericError, leaving parameters and state
// untouched, when any gradient is non-finite.
template <Real T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state,
               double lr);

struct LogRow {
  std::size_t step;
  double lr;
  double train_mae;
  double wall_ms;
};

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const LogRow& row);

// Runs cfg.steps updates on an already initialised model. Batch order is a
// pure function of cfg.seed. Rows are emitted every log_interval steps and
// after the last step.
template <Real T>
std::vector<LogRow> train(Uhdn<T>& model, std::span<const ImagePair> pairs,
                          const TrainConfig& cfg,
                          const std::function<void(const LogRow&)>& on_row = {});

// BT.601 luma on the [16, 235] scale, 1 x H x W.
Image luminance(const Image& rgb);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// Luma PSNR after cropping `border` pixels on each side; kInfinitePsnr for
// identical inputs.
double psnr(const Image& pred, const Image& target, std::size_t border);
// Gaussian-window SSIM on luma (11x11, sigma 1.5, range 255) over valid
// window positions, after the same border crop.
double ssim(const Image& pred, const Image& target, std::size_t border);

struct EvalRow {
  std::string image;
  double psnr_db;
  double ssim;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_psnr = 0;
  double mean_ssim = 0;
  double wall_ms = 0;
  std::size_t border = 0;
};

using Predictor = std::function<Image(const Image& lr)>;

// Whole-image inference; outputs clamped to [0, 1].
template <Real T>
Predictor model_predictor(Uhdn<T>& model, Optimization opt = Optimization::iso);
Predictor bicubic_predictor(std::size_t scale);

EvalReport evaluate(const Predictor& predict, std::span<const ImagePair> pairs,
                    std::size_t border);
void write_eval_csv(std::ostream& out, const EvalReport& report);

}  // namespace ikm
