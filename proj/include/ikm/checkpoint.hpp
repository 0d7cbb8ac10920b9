#pragma once

#include <filesystem>

#include "ikm/model.hpp"
#include "ikm/train.hpp"

namespace ikm {

// Container: "IKMC", u32 version, u8 dtype, u32 header length, canonical
// [model] text, 3 x f64 mean RGB, u32 record count, tensor records in
// parameter order.
struct CheckpointInfo {
  UhdnConfig model;
  DatasetStats stats;
  Dtype dtype = Dtype::f32;
};

template <Real T>
void save_checkpoint(const std::filesystem::path& path, Uhdn<T>& model);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

// Rebuilds the model from the embedded config and requires every stored
// record to match a parameter by name, shape and dtype.
template <Real T>
Uhdn<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace ikm
