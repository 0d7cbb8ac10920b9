#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ikm/data.hpp"

namespace ikm::testing {

// Smooth colour gradients, a few oriented sinusoids and hard-edged
// rectangles, kept inside [0.05, 0.95].
inline Image synthetic_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img({3, h, w});
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.3 + 0.4 * u(rng);
    gx[c] = 0.3 * (u(rng) - 0.5);
    gy[c] = 0.3 * (u(rng) - 0.5);
  }
  struct Wave { double fx, fy, phase, amp[3]; };
  std::vector<Wave> waves(4);
  for (auto& wv : waves) {
    const double freq = 0.05 + 0.4 * u(rng), angle = 6.283185307179586 * u(rng);
    wv.fx = freq * std::cos(angle);
    wv.fy = freq * std::sin(angle);
    wv.phase = 6.283185307179586 * u(rng);
    for (double& a : wv.amp) a = 0.08 * (u(rng) - 0.5);
  }
  struct Rect { std::size_t y0, x0, y1, x1; double delta[3]; };
  std::vector<Rect> rects(3);
  for (auto& r : rects) {
    r.y0 = static_cast<std::size_t>(u(rng) * h);
    r.x0 = static_cast<std::size_t>(u(rng) * w);
    r.y1 = std::min(h, r.y0 + 4 + static_cast<std::size_t>(u(rng) * h / 2));
    r.x1 = std::min(w, r.x0 + 4 + static_cast<std::size_t>(u(rng) * w / 2));
    for (double& d : r.delta) d = 0.3 * (u(rng) - 0.5);
  }
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double y = static_cast<double>(i) / h, x = static_cast<double>(j) / w;
        double v = base[c] + gx[c] * x + gy[c] * y;
        for (const auto& wv : waves)
          v += wv.amp[c] * std::sin(wv.fx * j + wv.fy * i + wv.phase);
        for (const auto& r : rects)
          if (i >= r.y0 && i < r.y1 && j >= r.x0 && j < r.x1) v += r.delta[c];
        img[(c * h + i) * w + j] = std::clamp(v, 0.05, 0.95);
      }
  return img;
}

// Writes `count` synthetic PNGs named img_000.png, ... into dir.
inline void write_synthetic_set(const std::filesystem::path& dir,
                                std::size_t count, std::size_t h,
                                std::size_t w, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < count; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%03zu.png", k);
    save_png(synthetic_image(h, w, seed * 1000 + k), dir / name);
  }
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ikm_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ikm::testing
