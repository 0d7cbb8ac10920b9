#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>

#include "ikm/tensor.hpp"

namespace ikm {

// Little-endian tensor record:
//   u32 name length, name bytes (UTF-8), u8 dtype code (0 = f32, 1 = f64),
//   u8 rank, u64 extent per axis, raw element buffer.
template <Real T>
void write_tensor_record(std::ostream& out, std::string_view name,
                         const Tensor<T>& t);

struct TensorRecord {
  std::string name;
  std::variant<Tensor<float>, Tensor<double>> tensor;
};

TensorRecord read_tensor_record(std::istream& in);

// Reads a record and requires it to carry dtype T.
template <Real T>
Tensor<T> read_tensor_record_as(std::istream& in, std::string* name = nullptr);

// Low-level little-endian helpers shared with the checkpoint container.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);

}  // namespace ikm
