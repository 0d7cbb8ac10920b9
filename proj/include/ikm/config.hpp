#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ikm/model.hpp"
#include "ikm/train.hpp"

namespace ikm {

struct DataConfig {
  std::filesystem::path train_dir;  // HR PNGs
  std::filesystem::path val_dir;    // HR PNGs, optional
  std::filesystem::path stats;      // cached mean RGB, optional
};

struct EvalConfig {
  std::filesystem::path lr_dir;  // optional; LR is degraded from HR if empty
  std::filesystem::path hr_dir;
  bool bicubic = false;
};

struct RunConfig {
  UhdnConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
};

// INI-style text: [model] / [train] / [data] / [eval] sections of
// `key = value` lines, '#' comments. Unknown sections, unknown keys and
// duplicates are errors; model.scale is required, everything else defaults.
RunConfig parse_run_config(std::string_view text,
                           const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical [model] section, round-trips through parse_run_config.
std::string format_model_config(const UhdnConfig& cfg);

}  // namespace ikm
