#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ikm/model.hpp"
#include "ikm/tensor.hpp"

namespace ikm {

// Images are 3 x H x W (or 1 x H x W for masks and maps) in [0, 1].
using Image = Tensor<double>;
using Rng = std::mt19937_64;

// 8-bit RGB, RGBA (alpha dropped), grayscale or palette PNGs. Grayscale is
// replicated to three channels.
Image load_png(const std::filesystem::path& path);
// Writes 1- or 3-channel images; values are clamped to [0, 1] and rounded
// half up to 8 bits.
void save_png(const Image& img, const std::filesystem::path& path);

// Sorted list of *.png files in a directory.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

// Cubic convolution (a = -0.5), kernel stretched by 1/scale on downscale,
// edge replication, weights renormalised per output pixel.
Image bicubic_resize(const Image& x, std::size_t out_h, std::size_t out_w);

Image crop(const Image& x, std::size_t top, std::size_t left, std::size_t h,
           std::size_t w);

struct ImagePair {
  Image hr;
  Image lr;
  std::size_t scale = 2;
  std::string source;
};

// Crops HR to multiples of s (top-left anchored), then bicubic-downsamples.
ImagePair degrade(const Image& hr, std::size_t scale, std::string source = {});

struct PatchPair {
  Image lr;
  Image hr;
  std::size_t row = 0, col = 0;  // LR offset
};

PatchPair crop_patch_pair(const ImagePair& pair, std::size_t patch,
                          std::size_t row, std::size_t col);
PatchPair sample_patch_pair(const ImagePair& pair, std::size_t patch, Rng& rng);

// code in [0, 8): (code & 3) counter-clockwise quarter turns, then a
// horizontal flip when code & 4.
Image dihedral(const Image& x, unsigned code);
unsigned augment(PatchPair& p, Rng& rng);

Image normalize(const Image& x, const DatasetStats& stats);
Image denormalize(const Image& x, const DatasetStats& stats);

// Per-channel mean over every pixel of every image.
DatasetStats compute_stats(std::span<const Image> images);
void write_stats(const DatasetStats& stats, const std::filesystem::path& path);
DatasetStats read_stats(const std::filesystem::path& path);

}  // namespace ikm
