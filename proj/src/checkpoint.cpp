#include "ikm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "ikm/config.hpp"
#include "ikm/tensor_io.hpp"

namespace ikm {
namespace fs = std::filesystem;
namespace {

constexpr char kMagic[4] = {'I', 'K', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;

template <Real T>
constexpr Dtype dtype_of() {
  return std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
}

CheckpointInfo read_header(std::istream& in, const fs::path& path) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("'" + path.string() + "' is not a checkpoint");
  if (read_u32(in) != kVersion)
    throw DataError("unsupported checkpoint version in '" + path.string() + "'");
  const int code = in.get();
  if (code != 0 && code != 1)
    throw DataError("bad dtype in checkpoint '" + path.string() + "'");
  const std::uint32_t len = read_u32(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), len))
    throw DataError("truncated checkpoint header in '" + path.string() + "'");
  CheckpointInfo info;
  info.dtype = code == 0 ? Dtype::f32 : Dtype::f64;
  info.model = parse_run_config(text, path.string() + " header").model;
  for (double& m : info.stats.mean_rgb) m = std::bit_cast<double>(read_u64(in));
  return info;
}

}  // namespace

template <Real T>
void save_checkpoint(const fs::path& path, Uhdn<T>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  out.put(static_cast<char>(DtypeTraits<T>::code));
  const std::string text = format_model_config(model.config());
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double m : model.stats().mean_rgb) write_u64(out, std::bit_cast<std::uint64_t>(m));
  const auto params = model.parameters();
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) write_tensor_record(out, p.name, *p.value);
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  return read_header(in, path);
}

template <Real T>
Uhdn<T> load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  const CheckpointInfo info = read_header(in, path);
  if (info.dtype != dtype_of<T>())
    throw DataError("checkpoint '" + path.string() + "' stores " +
                    to_string(info.dtype) + " parameters");
  Uhdn<T> model(info.model, info.stats);
  auto params = model.parameters();
  std::map<std::string, Tensor<T>*> by_name;
  for (auto& p : params) by_name[p.name] = p.value;
  const std::uint32_t count = read_u32(in);
  if (count != params.size())
    throw DataError("checkpoint '" + path.string() + "' holds " +
                    std::to_string(count) + " tensors, model has " +
                    std::to_string(params.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    Tensor<T> t = read_tensor_record_as<T>(in, &name);
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint tensor '" + name + "' has no matching parameter");
    if (t.shape() != it->second->shape())
      throw DataError("checkpoint tensor '" + name + "' has shape " +
                      to_string(t.shape()) + ", expected " +
                      to_string(it->second->shape()));
    *it->second = std::move(t);
    by_name.erase(it);
  }
  return model;
}

template void save_checkpoint(const fs::path&, Uhdn<float>&);
template void save_checkpoint(const fs::path&, Uhdn<double>&);
template Uhdn<float> load_checkpoint<float>(const fs::path&);
template Uhdn<double> load_checkpoint<double>(const fs::path&);

}  // namespace ikm
