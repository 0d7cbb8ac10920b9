#include "ikm/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>

#include "ikm/accounting.hpp"
#include "ikm/checkpoint.hpp"
#include "ikm/config.hpp"
#include "ikm/data.hpp"
#include "ikm/gradcheck.hpp"
#include "ikm/train.hpp"

namespace ikm::cli {
namespace fs = std::filesystem;
namespace {

void configure_threads() {
  int threads = 1;
  if (const char* env = std::getenv("IKM_NUM_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 4096)
      throw ConfigError("IKM_NUM_THREADS must be a positive integer, got '" +
                        std::string(env) + "'");
    threads = static_cast<int>(v);
  }
  omp_set_num_threads(threads);
}

std::vector<ImagePair> load_pairs(const fs::path& hr_dir, std::size_t scale) {
  std::vector<ImagePair> pairs;
  for (const auto& path : list_pngs(hr_dir))
    pairs.push_back(degrade(load_png(path), scale, path.filename().string()));
  if (pairs.empty()) throw DataError("no PNG files in '" + hr_dir.string() + "'");
  return pairs;
}

std::vector<ImagePair> load_aligned_pairs(const fs::path& lr_dir,
                                          const fs::path& hr_dir,
                                          std::size_t scale) {
  const auto lr_files = list_pngs(lr_dir);
  const auto hr_files = list_pngs(hr_dir);
  if (lr_files.size() != hr_files.size())
    throw DataError("LR dir has " + std::to_string(lr_files.size()) +
                    " images, HR dir has " + std::to_string(hr_files.size()));
  std::vector<ImagePair> pairs;
  for (std::size_t i = 0; i < lr_files.size(); ++i) {
    if (lr_files[i].filename() != hr_files[i].filename())
      throw DataError("misaligned file lists: '" + lr_files[i].filename().string() +
                      "' vs '" + hr_files[i].filename().string() + "'");
    ImagePair p;
    p.lr = load_png(lr_files[i]);
    const Image hr = load_png(hr_files[i]);
    const std::size_t h = p.lr.dim(1) * scale, w = p.lr.dim(2) * scale;
    if (hr.dim(1) < h || hr.dim(2) < w || hr.dim(1) / scale != p.lr.dim(1) ||
        hr.dim(2) / scale != p.lr.dim(2))
      throw DataError("'" + hr_files[i].filename().string() + "': HR " +
                      to_string(hr.shape()) + " does not match LR " +
                      to_string(p.lr.shape()) + " at scale " +
                      std::to_string(scale));
    p.hr = crop(hr, 0, 0, h, w);
    p.scale = scale;
    p.source = lr_files[i].filename().string();
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void apply_mode(RunConfig& cfg, const std::string& mode) {
  if (mode.empty()) return;
  if (mode == "iso" || mode == "go") {
    cfg.model.attention = AttentionMode::ikm;
    cfg.train.optimization = parse_optimization(mode);
  } else if (mode == "vanilla") {
    cfg.model.attention = AttentionMode::none;
  } else if (mode == "ca") {
    cfg.model.attention = AttentionMode::channel;
  } else if (mode == "sa") {
    cfg.model.attention = AttentionMode::spatial;
  } else {
    throw ConfigError("unknown --mode '" + mode +
                      "' (expected iso, go, vanilla, ca or sa)");
  }
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  return f;
}

template <Real T>
void train_typed(const RunConfig& cfg, const std::vector<ImagePair>& pairs,
                 const std::vector<ImagePair>& val, const DatasetStats& stats,
                 const fs::path& out_dir, std::ostream& out) {
  Uhdn<T> model(cfg.model, stats);
  model.initialize(cfg.train.seed);
  std::ofstream log = open_output(out_dir / "train_log.csv");
  write_log_header(log);
  const auto rows = train<T>(model, pairs, cfg.train, [&](const LogRow& r) {
    write_log_row(log, r);
    log.flush();
  });
  save_checkpoint(out_dir / "model.ckpt", model);
  out << "trained " << cfg.train.steps << " steps";
  if (!rows.empty())
    out << ", final train_mae " << std::setprecision(6) << rows.back().train_mae;
  out << '\n';
  if (!val.empty()) {
    const EvalReport r = evaluate(model_predictor(model, cfg.train.optimization),
                                  val, cfg.model.scale);
    std::ofstream report = open_output(out_dir / "val_report.csv");
    write_eval_csv(report, r);
    out << "validation PSNR " << std::setprecision(6) << r.mean_psnr
        << " dB, SSIM " << r.mean_ssim << '\n';
  }
}

int cmd_train(const fs::path& config, const fs::path& out_dir,
              std::optional<std::uint64_t> seed, const std::string& mode,
              std::ostream& out) {
  RunConfig cfg = load_run_config(config);
  apply_mode(cfg, mode);
  if (seed) cfg.train.seed = *seed;
  cfg.model.validate();
  if (cfg.data.train_dir.empty())
    throw ConfigError("missing required key data.train_dir");
  const auto pairs = load_pairs(cfg.data.train_dir, cfg.model.scale);
  std::vector<ImagePair> val;
  if (!cfg.data.val_dir.empty()) val = load_pairs(cfg.data.val_dir, cfg.model.scale);
  DatasetStats stats;
  if (!cfg.data.stats.empty() && fs::exists(cfg.data.stats)) {
    stats = read_stats(cfg.data.stats);
  } else {
    std::vector<Image> hrs;
    for (const auto& p : pairs) hrs.push_back(p.hr);
    stats = compute_stats(hrs);
  }
  for (const auto& p : pairs)
    if (p.lr.dim(1) < cfg.train.patch || p.lr.dim(2) < cfg.train.patch)
      throw DataError("training image '" + p.source + "' LR " +
                      to_string(p.lr.shape()) + " smaller than patch " +
                      std::to_string(cfg.train.patch));

  fs::create_directories(out_dir);
  write_stats(stats, out_dir / "stats.txt");
  if (cfg.train.dtype == Dtype::f32)
    train_typed<float>(cfg, pairs, val, stats, out_dir, out);
  else
    train_typed<double>(cfg, pairs, val, stats, out_dir, out);
  return kOk;
}

// Calls f with a model restored from the checkpoint in its stored dtype.
template <typename F>
auto with_model(const fs::path& checkpoint, F&& f) {
  if (read_checkpoint_info(checkpoint).dtype == Dtype::f32) {
    Uhdn<float> m = load_checkpoint<float>(checkpoint);
    return f(m);
  }
  Uhdn<double> m = load_checkpoint<double>(checkpoint);
  return f(m);
}

int cmd_eval(const fs::path& checkpoint, const fs::path& lr_dir,
             const fs::path& hr_dir, std::size_t scale, bool bicubic,
             const fs::path& csv, std::ostream& out) {
  if (!bicubic && checkpoint.empty())
    throw ConfigError("eval needs --checkpoint unless --bicubic is given");
  if (!bicubic) {
    const auto info = read_checkpoint_info(checkpoint);
    if (info.model.scale != scale)
      throw DataError("checkpoint is x" + std::to_string(info.model.scale) +
                      ", --scale is " + std::to_string(scale));
  }
  const auto pairs = lr_dir.empty() ? load_pairs(hr_dir, scale)
                                    : load_aligned_pairs(lr_dir, hr_dir, scale);
  const EvalReport report =
      bicubic ? evaluate(bicubic_predictor(scale), pairs, scale)
              : with_model(checkpoint, [&](auto& m) {
                  return evaluate(model_predictor(m), pairs, scale);
                });
  if (csv.empty()) {
    write_eval_csv(out, report);
  } else {
    std::ofstream f = open_output(csv);
    write_eval_csv(f, report);
    out << "mean PSNR " << std::setprecision(6) << report.mean_psnr
        << " dB, SSIM " << report.mean_ssim << '\n';
  }
  return kOk;
}

int cmd_infer(const fs::path& checkpoint, const fs::path& input,
              const fs::path& output, std::ostream& out) {
  const Image lr = load_png(input);
  const Image sr = with_model(checkpoint, [&](auto& m) {
    return model_predictor(m)(lr);
  });
  save_png(sr, output);
  out << "wrote " << output.string() << " (" << sr.dim(2) << "x" << sr.dim(1)
      << ")\n";
  return kOk;
}

int cmd_gradcheck(const std::string& layer, std::size_t trials,
                  std::uint64_t seed, double tol, std::ostream& out) {
  double worst = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const double e = gradcheck_trial(layer, seed + t);
    worst = std::max(worst, e);
    out << layer << " trial " << t << " max_rel_err " << std::setprecision(3)
        << std::scientific << e << std::defaultfloat << '\n';
  }
  out << layer << " worst " << std::setprecision(3) << std::scientific << worst
      << std::defaultfloat << (worst < tol ? " PASS" : " FAIL") << '\n';
  return worst < tol ? kOk : kNumericError;
}

int cmd_count(const fs::path& config, const std::string& what,
              std::size_t height, std::size_t width, std::ostream& out) {
  const RunConfig cfg = load_run_config(config);
  if (what == "params")
    out << count_params(cfg.model) << '\n';
  else if (what == "flops")
    out << count_macs(cfg.model, height, width) << '\n';
  else
    throw ConfigError("unknown --what '" + what + "' (expected params or flops)");
  return kOk;
}

int cmd_degrade(const fs::path& hr_dir, std::size_t scale,
                const fs::path& out_dir, std::ostream& out) {
  if (scale == 0) throw ConfigError("--scale must be positive");
  const auto pairs = load_pairs(hr_dir, scale);
  fs::create_directories(out_dir);
  for (const auto& p : pairs) save_png(p.lr, out_dir / p.source);
  out << "wrote " << pairs.size() << " LR images to " << out_dir.string() << '\n';
  return kOk;
}

// Attention of every input channel as a zoomed K x K grayscale tile, tiles
// laid out row-major; [1, 2] maps to [0, 1].
Image attention_tiles(const Tensor<double>& a) {
  constexpr std::size_t zoom = 8, gap = 1;
  const std::size_t c = a.dim(1), kh = a.dim(2), kw = a.dim(3);
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(double(c))));
  const std::size_t rows = (c + cols - 1) / cols;
  const std::size_t th = kh * zoom + gap, tw = kw * zoom + gap;
  Image img({1, rows * th - gap, cols * tw - gap});
  const std::size_t w = img.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t oy = (ch / cols) * th, ox = (ch % cols) * tw;
    for (std::size_t i = 0; i < kh * zoom; ++i)
      for (std::size_t j = 0; j < kw * zoom; ++j)
        img[(oy + i) * w + ox + j] =
            std::clamp(a.at(0, ch, i / zoom, j / zoom) - 1.0, 0.0, 1.0);
  }
  return img;
}

int cmd_attn_dump(const fs::path& checkpoint, const fs::path& input,
                  const std::string& layer, const fs::path& output,
                  std::ostream& out) {
  const Image lr = load_png(input);
  const Image tiles = with_model(checkpoint, [&](auto& m) {
    std::string known;
    for (const auto* conv : m.conv_layers()) {
      if (conv->name() != layer) {
        if (conv->modulated()) known += (known.empty() ? "" : ", ") + conv->name();
        continue;
      }
      if (!conv->modulated())
        throw ConfigError("layer '" + layer + "' carries no kernel attention");
      model_predictor(m)(lr);
      return attention_tiles(tensor_cast<double>(conv->attention()->values));
    }
    throw ConfigError("unknown layer '" + layer + "'; modulated layers: " + known);
  });
  save_png(tiles, output);
  out << "wrote " << output.string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Image-specific kernel modulation super-resolution toolkit"};
  app.require_subcommand(1);

  fs::path config, out_dir, checkpoint, lr_dir, hr_dir, input, output, csv;
  std::string mode, layer, what = "params";
  std::optional<std::uint64_t> seed;
  std::uint64_t gc_seed = 1;
  std::size_t scale = 0, trials = 20, height = 360, width = 480;
  double tol = 1e-4;
  bool bicubic = false;

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config");
  train_cmd->add_option("--config", config)->required();
  train_cmd->add_option("--out", out_dir)->required();
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--mode", mode, "iso, go, vanilla, ca or sa");

  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM against HR images");
  eval_cmd->add_option("--checkpoint", checkpoint);
  eval_cmd->add_option("--lr-dir", lr_dir);
  eval_cmd->add_option("--hr-dir", hr_dir)->required();
  eval_cmd->add_option("--scale", scale)->required();
  eval_cmd->add_option("--out", csv, "CSV report path (default stdout)");
  eval_cmd->add_flag("--bicubic", bicubic, "Evaluate the bicubic baseline");

  auto* infer_cmd = app.add_subcommand("infer", "Upscale one PNG");
  infer_cmd->add_option("--checkpoint", checkpoint)->required();
  infer_cmd->add_option("--input", input)->required();
  infer_cmd->add_option("--output", output)->required();

  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc_cmd->add_option("--layer", layer)->required();
  gc_cmd->add_option("--trials", trials);
  gc_cmd->add_option("--seed", gc_seed);
  gc_cmd->add_option("--tol", tol);

  auto* count_cmd = app.add_subcommand("count", "Parameter or MAC count");
  count_cmd->add_option("--config", config)->required();
  count_cmd->add_option("--what", what, "params or flops");
  count_cmd->add_option("--height", height, "Output height for flops");
  count_cmd->add_option("--width", width, "Output width for flops");

  auto* degrade_cmd = app.add_subcommand("degrade", "Bicubic LR generation");
  degrade_cmd->add_option("--hr-dir", hr_dir)->required();
  degrade_cmd->add_option("--scale", scale)->required();
  degrade_cmd->add_option("--out", out_dir)->required();

  auto* attn_cmd = app.add_subcommand("attn-dump", "Write kernel attention maps");
  attn_cmd->add_option("--checkpoint", checkpoint)->required();
  attn_cmd->add_option("--input", input)->required();
  attn_cmd->add_option("--layer", layer)->required();
  attn_cmd->add_option("--out", output)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    configure_threads();
    if (*train_cmd) return cmd_train(config, out_dir, seed, mode, out);
    if (*eval_cmd)
      return cmd_eval(checkpoint, lr_dir, hr_dir, scale, bicubic, csv, out);
    if (*infer_cmd) return cmd_infer(checkpoint, input, output, out);
    if (*gc_cmd) return cmd_gradcheck(layer, trials, gc_seed, tol, out);
    if (*count_cmd) return cmd_count(config, what, height, width, out);
    if (*degrade_cmd) return cmd_degrade(hr_dir, scale, out_dir, out);
    if (*attn_cmd) return cmd_attn_dump(checkpoint, input, layer, output, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace ikm::cli
