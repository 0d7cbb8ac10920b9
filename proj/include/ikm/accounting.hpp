#pragma once

#include <cstddef>
#include <cstdint>

#include "ikm/model.hpp"

namespace ikm {

// Trainable scalar count, derived from the configuration alone.
std::size_t count_params(const UhdnConfig& cfg);

// Multiply-accumulates per image for an out_h x out_w output. Every conv
// contributes c_out * c_in * K_h * K_w * H' * W'; attention generation is
// counted as zero, CA/SA gating as their FC/conv products.
std::uint64_t count_macs(const UhdnConfig& cfg, std::size_t out_h,
                         std::size_t out_w);

}  // namespace ikm
