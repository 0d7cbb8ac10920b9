#include "ikm/accounting.hpp"

namespace ikm {
namespace {

std::size_t conv_params(std::size_t c_in, std::size_t c_out, std::size_t k) {
  return c_out * c_in * k * k + c_out;
}

std::uint64_t conv_macs(std::size_t c_in, std::size_t c_out, std::size_t k,
                        std::uint64_t pixels) {
  return static_cast<std::uint64_t>(c_out) * c_in * k * k * pixels;
}

std::size_t gate_params(const UhdnConfig& cfg, std::size_t width) {
  switch (cfg.attention) {
    case AttentionMode::channel: {
      const std::size_t inner = ca_inner_width(width, cfg.ca_reduction);
      return 2 * inner * width + inner + width;
    }
    case AttentionMode::spatial:
      return conv_params(2, 1, cfg.sa_kernel);
    default:
      return 0;
  }
}

std::uint64_t gate_macs(const UhdnConfig& cfg, std::size_t width,
                        std::uint64_t pixels) {
  switch (cfg.attention) {
    case AttentionMode::channel:
      return 2 * ca_inner_width(width, cfg.ca_reduction) * width +
             width * pixels;
    case AttentionMode::spatial:
      return conv_macs(2, 1, cfg.sa_kernel, pixels) + width * pixels;
    default:
      return 0;
  }
}

}  // namespace

std::size_t count_params(const UhdnConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels;
  const std::size_t g = cfg.block.growth;
  std::size_t n = conv_params(3, c, 3);
  for (std::size_t d : cfg.block.depths) {
    std::size_t unit = conv_params(c + d * g, c, 1);
    for (std::size_t l = 0; l < d; ++l)
      unit += conv_params(c + l * g, g, cfg.kernel) + gate_params(cfg, g);
    n += cfg.blocks * unit;
  }
  if (cfg.trunk_conv) n += conv_params(c, c, 3);
  if (cfg.upscale_channels) n += conv_params(c, cfg.upscale_channels, 3);
  const std::size_t w = cfg.tail_channels();
  for (std::size_t r : cfg.upscale_stages()) n += conv_params(w, w * r * r, 3);
  return n + conv_params(w, 3, 3);
}

std::uint64_t count_macs(const UhdnConfig& cfg, std::size_t out_h,
                         std::size_t out_w) {
  cfg.validate();
  if (out_h % cfg.scale || out_w % cfg.scale)
    throw ConfigError("output size is not a multiple of the scale");
  const std::size_t c = cfg.channels;
  const std::size_t g = cfg.block.growth;
  std::uint64_t pixels =
      static_cast<std::uint64_t>(out_h / cfg.scale) * (out_w / cfg.scale);
  std::uint64_t n = conv_macs(3, c, 3, pixels);
  for (std::size_t d : cfg.block.depths) {
    std::uint64_t unit = conv_macs(c + d * g, c, 1, pixels);
    for (std::size_t l = 0; l < d; ++l)
      unit += conv_macs(c + l * g, g, cfg.kernel, pixels) +
              gate_macs(cfg, g, pixels);
    n += cfg.blocks * unit;
  }
  if (cfg.trunk_conv) n += conv_macs(c, c, 3, pixels);
  if (cfg.upscale_channels)
    n += conv_macs(c, cfg.upscale_channels, 3, pixels);
  const std::size_t w = cfg.tail_channels();
  for (std::size_t r : cfg.upscale_stages()) {
    n += conv_macs(w, w * r * r, 3, pixels);
    pixels *= r * r;
  }
  return n + conv_macs(w, 3, 3, pixels);
}

}  // namespace ikm
