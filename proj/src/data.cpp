#include "ikm/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>

namespace ikm {
namespace fs = std::filesystem;
namespace {

struct PngImageGuard {
  png_image* img;
  ~PngImageGuard() { png_image_free(img); }
};

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1) return ((a + 2) * x - (a + 3)) * x * x + 1;
  if (x < 2) return ((a * x - 5 * a) * x + 8 * a) * x - 4 * a;
  return 0;
}

struct Tap {
  std::size_t index;
  double weight;
};

// Taps per output sample along one axis.
std::vector<std::vector<Tap>> resize_taps(std::size_t in, std::size_t out) {
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  const double stretch = std::min(scale, 1.0);
  const double support = 2.0 / stretch;
  std::vector<std::vector<Tap>> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double centre = (static_cast<double>(o) + 0.5) / scale - 0.5;
    const auto first = static_cast<std::ptrdiff_t>(std::floor(centre - support));
    const auto last = static_cast<std::ptrdiff_t>(std::ceil(centre + support));
    double total = 0;
    for (std::ptrdiff_t j = first; j <= last; ++j) {
      const double wgt = cubic((centre - static_cast<double>(j)) * stretch);
      if (wgt == 0) continue;
      const auto idx = static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(in) - 1));
      taps[o].push_back({idx, wgt});
      total += wgt;
    }
    for (auto& t : taps[o]) t.weight /= total;
  }
  return taps;
}

Dims4 image_dims(const Image& x, const char* what) {
  if (x.rank() != 3)
    throw ShapeError(std::string(what) + ": expected C x H x W, got " +
                     to_string(x.shape()));
  return {1, x.dim(0), x.dim(1), x.dim(2)};
}

}  // namespace

Image load_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  PngImageGuard guard{&img};
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw DataError("cannot read PNG '" + path.string() + "': " + img.message);
  if (img.format & PNG_FORMAT_FLAG_LINEAR)
    throw DataError("unsupported bit depth in '" + path.string() +
                    "' (8-bit images only)");
  img.format = PNG_FORMAT_RGBA;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr))
    throw DataError("cannot decode PNG '" + path.string() + "': " + img.message);
  const std::size_t h = img.height, w = img.width;
  Image out({3, h, w});
  for (std::size_t k = 0; k < h * w; ++k)
    for (std::size_t c = 0; c < 3; ++c)
      out[c * h * w + k] = buf[4 * k + c] / 255.0;
  return out;
}

void save_png(const Image& x, const fs::path& path) {
  const Dims4 d = image_dims(x, "save_png");
  if (d.c != 1 && d.c != 3)
    throw ShapeError("save_png: expected 1 or 3 channels, got " +
                     std::to_string(d.c));
  if (!all_finite(x)) throw NumericError("save_png: non-finite pixel values");
  std::vector<png_byte> buf(d.c * d.plane());
  for (std::size_t k = 0; k < d.plane(); ++k)
    for (std::size_t c = 0; c < d.c; ++c) {
      const double v = std::clamp(x[c * d.plane() + k], 0.0, 1.0);
      buf[d.c * k + c] = static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
    }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(d.w);
  img.height = static_cast<png_uint_32>(d.h);
  img.format = d.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  PngImageGuard guard{&img};
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw DataError("cannot write PNG '" + path.string() + "': " + img.message);
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw DataError("not a directory: '" + dir.string() + "'");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Image bicubic_resize(const Image& x, std::size_t out_h, std::size_t out_w) {
  const Dims4 d = image_dims(x, "bicubic_resize");
  if (out_h == 0 || out_w == 0)
    throw ShapeError("bicubic_resize: output size must be positive");
  const auto col_taps = resize_taps(d.w, out_w);
  const auto row_taps = resize_taps(d.h, out_h);
  Image mid({d.c, d.h, out_w});
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t i = 0; i < d.h; ++i) {
      const double* in = x.data() + (c * d.h + i) * d.w;
      double* out = mid.data() + (c * d.h + i) * out_w;
      for (std::size_t j = 0; j < out_w; ++j) {
        double s = 0;
        for (const Tap& t : col_taps[j]) s += t.weight * in[t.index];
        out[j] = s;
      }
    }
  Image y({d.c, out_h, out_w});
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t i = 0; i < out_h; ++i) {
      double* out = y.data() + (c * out_h + i) * out_w;
      for (const Tap& t : row_taps[i]) {
        const double* in = mid.data() + (c * d.h + t.index) * out_w;
        for (std::size_t j = 0; j < out_w; ++j) out[j] += t.weight * in[j];
      }
    }
  return y;
}

Image crop(const Image& x, std::size_t top, std::size_t left, std::size_t h,
           std::size_t w) {
  const Dims4 d = image_dims(x, "crop");
  if (top + h > d.h || left + w > d.w)
    throw ShapeError("crop window exceeds image " + to_string(x.shape()));
  Image out({d.c, h, w});
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t i = 0; i < h; ++i)
      std::copy_n(x.data() + (c * d.h + top + i) * d.w + left, w,
                  out.data() + (c * h + i) * w);
  return out;
}

ImagePair degrade(const Image& hr, std::size_t scale, std::string source) {
  const Dims4 d = image_dims(hr, "degrade");
  if (scale == 0) throw ConfigError("scale must be positive");
  const std::size_t h = d.h / scale * scale, w = d.w / scale * scale;
  if (h == 0 || w == 0)
    throw DataError("image " + to_string(hr.shape()) + " smaller than scale " +
                    std::to_string(scale));
  ImagePair p;
  p.hr = (h == d.h && w == d.w) ? hr : crop(hr, 0, 0, h, w);
  p.lr = bicubic_resize(p.hr, h / scale, w / scale);
  p.scale = scale;
  p.source = std::move(source);
  return p;
}

PatchPair crop_patch_pair(const ImagePair& pair, std::size_t patch,
                          std::size_t row, std::size_t col) {
  const std::size_t s = pair.scale;
  return {crop(pair.lr, row, col, patch, patch),
          crop(pair.hr, s * row, s * col, s * patch, s * patch), row, col};
}

PatchPair sample_patch_pair(const ImagePair& pair, std::size_t patch, Rng& rng) {
  const Dims4 d = image_dims(pair.lr, "sample_patch_pair");
  if (d.h < patch || d.w < patch)
    throw DataError("LR image " + to_string(pair.lr.shape()) +
                    " smaller than patch " + std::to_string(patch) +
                    (pair.source.empty() ? "" : " (" + pair.source + ")"));
  std::uniform_int_distribution<std::size_t> rows(0, d.h - patch);
  std::uniform_int_distribution<std::size_t> cols(0, d.w - patch);
  const std::size_t r = rows(rng);
  const std::size_t c = cols(rng);
  return crop_patch_pair(pair, patch, r, c);
}

Image dihedral(const Image& x, unsigned code) {
  const Dims4 d = image_dims(x, "dihedral");
  Image cur = x;
  std::size_t h = d.h, w = d.w;
  for (unsigned k = 0; k < (code & 3u); ++k) {
    // Counter-clockwise quarter turn: out[i][j] = in[j][w-1-i].
    Image next({d.c, w, h});
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < w; ++i)
        for (std::size_t j = 0; j < h; ++j)
          next[(c * w + i) * h + j] = cur[(c * h + j) * w + (w - 1 - i)];
    cur = std::move(next);
    std::swap(h, w);
  }
  if (code & 4u)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < h; ++i) {
        double* row = cur.data() + (c * h + i) * w;
        std::reverse(row, row + w);
      }
  return cur;
}

unsigned augment(PatchPair& p, Rng& rng) {
  const auto code = static_cast<unsigned>(
      std::uniform_int_distribution<unsigned>(0, 7)(rng));
  p.lr = dihedral(p.lr, code);
  p.hr = dihedral(p.hr, code);
  return code;
}

namespace {

Image shift_channels(const Image& x, const DatasetStats& stats, double sign) {
  const Dims4 d = image_dims(x, "normalize");
  if (d.c != 3) throw ShapeError("normalize: expected 3 channels");
  Image y = x;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t k = 0; k < d.plane(); ++k)
      y[c * d.plane() + k] += sign * stats.mean_rgb[c];
  return y;
}

}  // namespace

Image normalize(const Image& x, const DatasetStats& stats) {
  return shift_channels(x, stats, -1.0);
}

Image denormalize(const Image& x, const DatasetStats& stats) {
  return shift_channels(x, stats, 1.0);
}

DatasetStats compute_stats(std::span<const Image> images) {
  if (images.empty()) throw DataError("cannot compute stats of an empty set");
  std::array<double, 3> sum{};
  double count = 0;
  for (const Image& img : images) {
    const Dims4 d = image_dims(img, "compute_stats");
    if (d.c != 3) throw ShapeError("compute_stats: expected 3 channels");
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < d.plane(); ++k)
        sum[c] += img[c * d.plane() + k];
    count += static_cast<double>(d.plane());
  }
  DatasetStats s;
  for (std::size_t c = 0; c < 3; ++c) s.mean_rgb[c] = sum[c] / count;
  return s;
}

void write_stats(const DatasetStats& stats, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write stats file '" + path.string() + "'");
  out << std::setprecision(17);
  for (double m : stats.mean_rgb) out << m << '\n';
}

DatasetStats read_stats(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read stats file '" + path.string() + "'");
  DatasetStats s;
  for (double& m : s.mean_rgb)
    if (!(in >> m) || !std::isfinite(m))
      throw DataError("malformed stats file '" + path.string() + "'");
  return s;
}

}  // namespace ikm
