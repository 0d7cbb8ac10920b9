#include <gtest/gtest.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "ikm/data.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

namespace ikm {
namespace {

using testing::TempDir;

void put_u32(std::string& s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>(v >> shift));
}

void put_chunk(std::string& file, const char* type, const std::string& data) {
  put_u32(file, static_cast<std::uint32_t>(data.size()));
  std::string body = std::string(type, 4) + data;
  file += body;
  put_u32(file, static_cast<std::uint32_t>(
                    crc32(0, reinterpret_cast<const Bytef*>(body.data()),
                          static_cast<uInt>(body.size()))));
}

// Minimal PNG: signature, IHDR, one zlib IDAT of filter-0 rows, IEND.
void write_raw_png(const std::filesystem::path& path, std::uint32_t w, std::uint32_t h,
                   std::uint8_t bit_depth, std::uint8_t colour_type,
                   const std::vector<std::uint8_t>& rows) {
  std::string file("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, w);
  put_u32(ihdr, h);
  ihdr += static_cast<char>(bit_depth);
  ihdr += static_cast<char>(colour_type);
  ihdr += std::string(3, '\0');
  put_chunk(file, "IHDR", ihdr);
  uLongf len = compressBound(static_cast<uLong>(rows.size()));
  std::string z(len, '\0');
  compress(reinterpret_cast<Bytef*>(z.data()), &len, rows.data(),
           static_cast<uLong>(rows.size()));
  z.resize(len);
  put_chunk(file, "IDAT", z);
  put_chunk(file, "IEND", "");
  std::ofstream(path, std::ios::binary) << file;
}

TEST(Png, CraftedRgbFileDecodesExactly) {
  TempDir dir("png");
  // Row 0: (255,0,0) (0,128,255); row 1: (10,20,30) (1,2,3)
  write_raw_png(dir.path() / "a.png", 2, 2, 8, 2,
                {0, 255, 0, 0, 0, 128, 255, 0, 10, 20, 30, 1, 2, 3});
  const Image img = load_png(dir.path() / "a.png");
  ASSERT_EQ(img.shape(), (Shape{3, 2, 2}));
  const double expect[3][4] = {{255, 0, 10, 1}, {0, 128, 20, 2}, {0, 255, 30, 3}};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(img[c * 4 + k], expect[c][k] / 255.0);
}

TEST(Png, CraftedGrayscaleReplicates) {
  TempDir dir("png");
  write_raw_png(dir.path() / "g.png", 2, 1, 8, 0, {0, 7, 200});
  const Image img = load_png(dir.path() / "g.png");
  ASSERT_EQ(img.shape(), (Shape{3, 1, 2}));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(img[c * 2], 7 / 255.0);
    EXPECT_EQ(img[c * 2 + 1], 200 / 255.0);
  }
}

TEST(Png, SixteenBitRejected) {
  TempDir dir("png");
  write_raw_png(dir.path() / "d.png", 1, 1, 16, 2, {0, 1, 2, 3, 4, 5, 6});
  EXPECT_THROW(load_png(dir.path() / "d.png"), DataError);
}

TEST(Png, UnreadableFileRejected) {
  TempDir dir("png");
  std::ofstream(dir.path() / "bad.png") << "not a png";
  EXPECT_THROW(load_png(dir.path() / "bad.png"), DataError);
  EXPECT_THROW(load_png(dir.path() / "missing.png"), DataError);
}

TEST(Png, SaveLoadQuantisationBound) {
  TempDir dir("png");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  Image img({3, 9, 7});
  for (auto& v : img.values()) v = u(rng);
  save_png(img, dir.path() / "r.png");
  const Image back = load_png(dir.path() / "r.png");
  EXPECT_LE(max_abs_diff(img, back), 0.5 / 255 + 1e-12);
}

TEST(Png, SaveClampsAndRoundsHalfUp) {
  TempDir dir("png");
  Image img({1, 1, 4}, std::vector<double>{-0.2, 1.7, 0.5 / 255, 1.5 / 255 - 1e-9});
  save_png(img, dir.path() / "c.png");
  const Image back = load_png(dir.path() / "c.png");
  EXPECT_EQ(back[0], 0.0);
  EXPECT_EQ(back[1], 1.0);
  EXPECT_EQ(back[2], 1 / 255.0);
  EXPECT_EQ(back[3], 1 / 255.0);
  EXPECT_THROW(save_png(Image({2, 2, 2}), dir.path() / "x.png"), ShapeError);
}

TEST(Png, ListIsSortedAndFiltered) {
  TempDir dir("png");
  for (const char* n : {"b.png", "a.PNG", "c.txt"}) std::ofstream(dir.path() / n) << "x";
  const auto files = list_pngs(dir.path());
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "a.PNG");
  EXPECT_EQ(files[1].filename(), "b.png");
  EXPECT_THROW(list_pngs(dir.path() / "none"), DataError);
}

TEST(Bicubic, ConstantStaysConstant) {
  const Image img({3, 10, 13}, 0.37);
  for (auto [h, w] : {std::pair{5, 6}, {20, 26}, {7, 13}}) {
    const Image out = bicubic_resize(img, h, w);
    for (double v : out.values()) EXPECT_NEAR(v, 0.37, 1e-14);
  }
}

TEST(Bicubic, SameSizeIsIdentity) {
  const Image img = testing::synthetic_image(11, 9, 3);
  EXPECT_LE(max_abs_diff(bicubic_resize(img, 11, 9), img), 1e-6);
}

TEST(Bicubic, RampDownscaleMatchesKernelSum) {
  Image ramp({1, 8, 8});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) ramp[i * 8 + j] = 0.1 * i + 0.03 * j;
  const Image out = bicubic_resize(ramp, 4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const auto wr = testing::cubic_weights(8, 4, i);
      const auto wc = testing::cubic_weights(8, 4, j);
      double s = 0;
      for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) s += wr[r] * wc[c] * ramp[r * 8 + c];
      EXPECT_NEAR(out[i * 4 + j], s, 1e-6);
    }
}

TEST(Bicubic, RandomResizesMatchKernelSum) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto [h, w, oh, ow] : {std::array<std::size_t, 4>{9, 7, 3, 2}, {5, 6, 11, 13},
                             {12, 12, 4, 4}, {7, 10, 7, 4}}) {
    Image img({1, h, w});
    for (auto& v : img.values()) v = u(rng);
    const Image out = bicubic_resize(img, oh, ow);
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const auto wr = testing::cubic_weights(h, oh, i);
        const auto wc = testing::cubic_weights(w, ow, j);
        double s = 0;
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t c = 0; c < w; ++c) s += wr[r] * wc[c] * img[r * w + c];
        EXPECT_NEAR(out[i * ow + j], s, 1e-12);
      }
  }
}

TEST(Bicubic, SmoothRoundTrip) {
  Image img({3, 32, 32});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j)
        img[(c * 32 + i) * 32 + j] =
            0.5 + 0.3 * std::sin(0.2 * i + 0.1 * c) * std::cos(0.15 * j);
  for (std::size_t s : {2, 3, 4}) {
    const Image back = bicubic_resize(bicubic_resize(img, 32 * s, 32 * s), 32, 32);
    double mae = 0;
    for (std::size_t k = 0; k < img.size(); ++k) mae += std::abs(back[k] - img[k]);
    EXPECT_LT(mae / img.size(), 2.0 / 255) << s;
  }
}

TEST(Bicubic, ZeroSizeThrows) {
  EXPECT_THROW(bicubic_resize(Image({3, 4, 4}), 0, 2), ShapeError);
}

TEST(Degrade, CropsToMultiplesThenDownsamples) {
  const Image hr = testing::synthetic_image(50, 47, 5);
  const ImagePair p = degrade(hr, 4, "x");
  EXPECT_EQ(p.hr.shape(), (Shape{3, 48, 44}));
  EXPECT_EQ(p.lr.shape(), (Shape{3, 12, 11}));
  EXPECT_EQ(p.hr, crop(hr, 0, 0, 48, 44));
  EXPECT_LE(max_abs_diff(p.lr, bicubic_resize(p.hr, 12, 11)), 0.0);
  EXPECT_THROW(degrade(Image({3, 3, 3}), 4), DataError);
}

TEST(Patches, WholeImageWhenExactlyPatchSized) {
  const ImagePair p = degrade(testing::synthetic_image(96, 96, 6), 2);
  Rng rng(1);
  const PatchPair pp = sample_patch_pair(p, 48, rng);
  EXPECT_EQ(pp.row, 0u);
  EXPECT_EQ(pp.col, 0u);
  EXPECT_EQ(pp.lr, p.lr);
  EXPECT_EQ(pp.hr, p.hr);
}

TEST(Patches, HrOffsetIsScaledLrOffset) {
  const ImagePair p = degrade(testing::synthetic_image(90, 120, 7), 3);
  const PatchPair pp = crop_patch_pair(p, 8, 5, 11);
  EXPECT_EQ(pp.lr, crop(p.lr, 5, 11, 8, 8));
  EXPECT_EQ(pp.hr, crop(p.hr, 15, 33, 24, 24));
}

TEST(Patches, RandomOffsetsStayInBounds) {
  const ImagePair p = degrade(testing::synthetic_image(70, 90, 8), 2);
  Rng rng(9);
  std::size_t max_r = 0, max_c = 0;
  for (int k = 0; k < 1000; ++k) {
    const PatchPair pp = sample_patch_pair(p, 12, rng);
    ASSERT_LE(pp.row + 12, 35u);
    ASSERT_LE(pp.col + 12, 45u);
    max_r = std::max(max_r, pp.row);
    max_c = std::max(max_c, pp.col);
  }
  EXPECT_EQ(max_r, 35u - 12);
  EXPECT_EQ(max_c, 45u - 12);
  EXPECT_THROW(sample_patch_pair(p, 40, rng), DataError);
}

TEST(Patches, SameSeedSameSequence) {
  const ImagePair p = degrade(testing::synthetic_image(64, 64, 10), 2);
  Rng a(5), b(5);
  for (int k = 0; k < 20; ++k) {
    auto x = sample_patch_pair(p, 8, a), y = sample_patch_pair(p, 8, b);
    EXPECT_EQ(x.row, y.row);
    EXPECT_EQ(x.col, y.col);
    EXPECT_EQ(augment(x, a), augment(y, b));
  }
}

TEST(Augment, IdentityCodeLeavesImage) {
  const Image img = testing::synthetic_image(5, 7, 11);
  EXPECT_EQ(dihedral(img, 0), img);
}

TEST(Augment, QuarterTurnsCompose) {
  const Image img = testing::synthetic_image(5, 7, 12);
  EXPECT_EQ(dihedral(dihedral(img, 1), 1), dihedral(img, 2));
  EXPECT_EQ(dihedral(dihedral(img, 2), 2), img);
  EXPECT_EQ(dihedral(dihedral(img, 3), 1), img);
  EXPECT_EQ(dihedral(dihedral(img, 4), 4), img);
  EXPECT_EQ(dihedral(img, 1).shape(), (Shape{3, 7, 5}));
}

TEST(Augment, QuarterTurnIsCounterClockwise) {
  // [[1,2],[3,4]] turned CCW is [[2,4],[1,3]].
  Image img({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Image r = dihedral(img, 1);
  EXPECT_EQ(r, Image({1, 2, 2}, std::vector<double>{2, 4, 1, 3}));
  EXPECT_EQ(dihedral(img, 4), Image({1, 2, 2}, std::vector<double>{2, 1, 4, 3}));
}

TEST(Augment, AllCodesPreservePixelMultiset) {
  const Image img = testing::synthetic_image(6, 9, 13);
  for (unsigned code = 0; code < 8; ++code) {
    const Image out = dihedral(img, code);
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> a(img.data() + c * 54, img.data() + (c + 1) * 54);
      std::vector<double> b(out.data() + c * 54, out.data() + (c + 1) * 54);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      EXPECT_EQ(a, b) << code;
    }
  }
}

TEST(Augment, EightDistinctTransforms) {
  const Image img = testing::synthetic_image(6, 6, 14);
  std::vector<Image> seen;
  for (unsigned code = 0; code < 8; ++code) seen.push_back(dihedral(img, code));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j) EXPECT_NE(seen[i], seen[j]);
}

TEST(Augment, PairStaysAligned) {
  const ImagePair p = degrade(testing::synthetic_image(40, 40, 15), 2);
  Rng rng(3);
  for (int k = 0; k < 16; ++k) {
    PatchPair pp = sample_patch_pair(p, 10, rng);
    const PatchPair orig = pp;
    const unsigned code = augment(pp, rng);
    EXPECT_EQ(pp.lr, dihedral(orig.lr, code));
    EXPECT_EQ(pp.hr, dihedral(orig.hr, code));
  }
}

TEST(Normalize, RoundTripAndMeanImage) {
  const DatasetStats s{{0.45, 0.44, 0.40}};
  const Image img = testing::synthetic_image(8, 8, 16);
  EXPECT_LE(max_abs_diff(denormalize(normalize(img, s), s), img), 1e-7);
  Image mean({3, 2, 2});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t k = 0; k < 4; ++k) mean[c * 4 + k] = s.mean_rgb[c];
  const Image zero = normalize(mean, s);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(Stats, TwoImageToySet) {
  Image a({3, 1, 2}, std::vector<double>{0.0, 1.0, 0.2, 0.2, 0.5, 0.7});
  Image b({3, 2, 1}, std::vector<double>{0.5, 0.5, 0.4, 0.0, 0.1, 0.1});
  const std::vector<Image> set{a, b};
  const DatasetStats s = compute_stats(set);
  EXPECT_DOUBLE_EQ(s.mean_rgb[0], (0.0 + 1.0 + 0.5 + 0.5) / 4);
  EXPECT_DOUBLE_EQ(s.mean_rgb[1], (0.2 + 0.2 + 0.4 + 0.0) / 4);
  EXPECT_DOUBLE_EQ(s.mean_rgb[2], (0.5 + 0.7 + 0.1 + 0.1) / 4);
  EXPECT_THROW(compute_stats({}), DataError);
}

TEST(Stats, FileRoundTripIsExact) {
  TempDir dir("stats");
  const DatasetStats s{{0.1234567890123456, 1.0 / 3, 0.7}};
  write_stats(s, dir.path() / "stats.txt");
  EXPECT_EQ(read_stats(dir.path() / "stats.txt").mean_rgb, s.mean_rgb);
  std::ofstream(dir.path() / "bad.txt") << "0.1\nfoo\n";
  EXPECT_THROW(read_stats(dir.path() / "bad.txt"), DataError);
}

}  // namespace
}  // namespace ikm
