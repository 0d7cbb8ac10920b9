#include "ikm/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace ikm {
namespace {

template <typename U>
void write_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U read_le(std::istream& in) {
  std::array<char, sizeof(U)> bytes;
  if (!in.read(bytes.data(), bytes.size()))
    throw DataError("tensor record truncated");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  U v;
  std::memcpy(&v, bytes.data(), sizeof(U));
  return v;
}

template <Real T>
Tensor<T> read_payload(std::istream& in, Shape shape) {
  Tensor<T> t(std::move(shape));
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(T))))
      throw DataError("tensor record payload truncated");
  } else {
    for (auto& v : t.values()) v = read_le<T>(in);
  }
  return t;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }

template <Real T>
void write_tensor_record(std::ostream& out, std::string_view name,
                         const Tensor<T>& t) {
  if (t.rank() > 255) throw ShapeError("tensor rank exceeds 255");
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_le<std::uint8_t>(out, DtypeTraits<T>::code);
  write_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t e : t.shape()) write_le<std::uint64_t>(out, e);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(T)));
  } else {
    for (T v : t.values()) write_le(out, v);
  }
  if (!out) throw DataError("failed writing tensor record '" +
                            std::string(name) + "'");
}

TensorRecord read_tensor_record(std::istream& in) {
  TensorRecord rec;
  const auto name_len = read_le<std::uint32_t>(in);
  rec.name.resize(name_len);
  if (name_len && !in.read(rec.name.data(), name_len))
    throw DataError("tensor record name truncated");
  const auto code = read_le<std::uint8_t>(in);
  const auto rank = read_le<std::uint8_t>(in);
  Shape shape(rank);
  for (auto& e : shape) e = read_le<std::uint64_t>(in);
  switch (code) {
    case DtypeTraits<float>::code:
      rec.tensor = read_payload<float>(in, std::move(shape));
      break;
    case DtypeTraits<double>::code:
      rec.tensor = read_payload<double>(in, std::move(shape));
      break;
    default:
      throw DataError("unknown dtype code " + std::to_string(code) +
                      " in record '" + rec.name + "'");
  }
  return rec;
}

template <Real T>
Tensor<T> read_tensor_record_as(std::istream& in, std::string* name) {
  TensorRecord rec = read_tensor_record(in);
  if (name) *name = rec.name;
  if (auto* t = std::get_if<Tensor<T>>(&rec.tensor)) return std::move(*t);
  throw DataError("record '" + rec.name + "' is not of dtype " +
                  DtypeTraits<T>::name);
}

template void write_tensor_record(std::ostream&, std::string_view,
                                  const Tensor<float>&);
template void write_tensor_record(std::ostream&, std::string_view,
                                  const Tensor<double>&);
template Tensor<float> read_tensor_record_as<float>(std::istream&,
                                                    std::string*);
template Tensor<double> read_tensor_record_as<double>(std::istream&,
                                                      std::string*);

}  // namespace ikm
