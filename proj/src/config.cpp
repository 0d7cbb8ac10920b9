#include "ikm/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace ikm {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  std::size_t line;
};

class ValueReader {
 public:
  ValueReader(std::string key, const Entry& e, const std::string& origin)
      : key_(std::move(key)), e_(e), origin_(origin) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError(origin_ + ":" + std::to_string(e_.line) + ": " + key_ +
                      ": " + why);
  }

  std::size_t count() const { return parse_count(e_.value); }

  double real() const {
    std::istringstream in(e_.value);
    double v;
    in >> v;
    if (!in || !in.eof() || !std::isfinite(v))
      fail("expected a finite number, got '" + e_.value + "'");
    return v;
  }

  bool flag() const {
    if (e_.value == "true" || e_.value == "1") return true;
    if (e_.value == "false" || e_.value == "0") return false;
    fail("expected true or false, got '" + e_.value + "'");
  }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> out;
    std::string_view rest = e_.value;
    while (true) {
      const auto comma = rest.find(',');
      out.push_back(parse_count(std::string(trim(rest.substr(0, comma)))));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  const std::string& text() const { return e_.value; }

  template <typename F>
  auto convert(F&& f) const {
    try {
      return f(e_.value);
    } catch (const ConfigError& err) {
      fail(err.what());
    }
  }

 private:
  std::size_t parse_count(const std::string& s) const {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
      fail("expected a non-negative integer, got '" + s + "'");
    return v;
  }

  std::string key_;
  const Entry& e_;
  const std::string& origin_;
};

using Setter = std::function<void(RunConfig&, const ValueReader&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.scale", [](RunConfig& c, const ValueReader& v) { c.model.scale = v.count(); }},
      {"model.blocks", [](RunConfig& c, const ValueReader& v) { c.model.blocks = v.count(); }},
      {"model.channels", [](RunConfig& c, const ValueReader& v) { c.model.channels = v.count(); }},
      {"model.growth", [](RunConfig& c, const ValueReader& v) { c.model.block.growth = v.count(); }},
      {"model.depths", [](RunConfig& c, const ValueReader& v) { c.model.block.depths = v.counts(); }},
      {"model.u_style", [](RunConfig& c, const ValueReader& v) { c.model.block.u_style = v.flag(); }},
      {"model.trunk_conv", [](RunConfig& c, const ValueReader& v) { c.model.trunk_conv = v.flag(); }},
      {"model.upscale_channels", [](RunConfig& c, const ValueReader& v) { c.model.upscale_channels = v.count(); }},
      {"model.kernel", [](RunConfig& c, const ValueReader& v) { c.model.kernel = v.count(); }},
      {"model.dilation", [](RunConfig& c, const ValueReader& v) { c.model.dilation = v.count(); }},
      {"model.attention", [](RunConfig& c, const ValueReader& v) { c.model.attention = v.convert(parse_attention_mode); }},
      {"model.threshold", [](RunConfig& c, const ValueReader& v) { c.model.threshold = v.real(); }},
      {"model.ca_reduction", [](RunConfig& c, const ValueReader& v) { c.model.ca_reduction = v.count(); }},
      {"model.sa_kernel", [](RunConfig& c, const ValueReader& v) { c.model.sa_kernel = v.count(); }},
      {"train.batch_size", [](RunConfig& c, const ValueReader& v) { c.train.batch_size = v.count(); }},
      {"train.lr", [](RunConfig& c, const ValueReader& v) { c.train.lr0 = v.real(); }},
      {"train.halving_period", [](RunConfig& c, const ValueReader& v) { c.train.halving_period = v.count(); }},
      {"train.steps", [](RunConfig& c, const ValueReader& v) { c.train.steps = v.count(); }},
      {"train.seed", [](RunConfig& c, const ValueReader& v) { c.train.seed = v.count(); }},
      {"train.optimization", [](RunConfig& c, const ValueReader& v) { c.train.optimization = v.convert(parse_optimization); }},
      {"train.dtype", [](RunConfig& c, const ValueReader& v) { c.train.dtype = v.convert(parse_dtype); }},
      {"train.patch", [](RunConfig& c, const ValueReader& v) { c.train.patch = v.count(); }},
      {"train.fixed_patches", [](RunConfig& c, const ValueReader& v) { c.train.fixed_patches = v.count(); }},
      {"train.augment", [](RunConfig& c, const ValueReader& v) { c.train.augment = v.flag(); }},
      {"train.log_interval", [](RunConfig& c, const ValueReader& v) { c.train.log_interval = v.count(); }},
      {"data.train_dir", [](RunConfig& c, const ValueReader& v) { c.data.train_dir = v.text(); }},
      {"data.val_dir", [](RunConfig& c, const ValueReader& v) { c.data.val_dir = v.text(); }},
      {"data.stats", [](RunConfig& c, const ValueReader& v) { c.data.stats = v.text(); }},
      {"eval.lr_dir", [](RunConfig& c, const ValueReader& v) { c.eval.lr_dir = v.text(); }},
      {"eval.hr_dir", [](RunConfig& c, const ValueReader& v) { c.eval.hr_dir = v.text(); }},
      {"eval.bicubic", [](RunConfig& c, const ValueReader& v) { c.eval.bicubic = v.flag(); }},
  };
  return table;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::string& origin) {
  static const std::set<std::string> sections = {"model", "train", "data", "eval"};
  std::map<std::string, Entry> entries;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!sections.count(section))
        throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
    if (!setters().count(key)) throw ConfigError(where + "unknown key " + key);
    if (entries.count(key)) throw ConfigError(where + "duplicate key " + key);
    entries[key] = {std::string(trim(line.substr(eq + 1))), line_no};
  }
  if (!entries.count("model.scale"))
    throw ConfigError(origin + ": missing required key model.scale");

  RunConfig cfg;
  for (const auto& [key, entry] : entries)
    setters().at(key)(cfg, ValueReader(key, entry, origin));
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.string());
}

std::string format_model_config(const UhdnConfig& c) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "[model]\n"
      << "scale = " << c.scale << '\n'
      << "blocks = " << c.blocks << '\n'
      << "channels = " << c.channels << '\n'
      << "growth = " << c.block.growth << '\n'
      << "depths = ";
  for (std::size_t i = 0; i < c.block.depths.size(); ++i)
    out << (i ? "," : "") << c.block.depths[i];
  out << '\n'
      << "u_style = " << (c.block.u_style ? "true" : "false") << '\n'
      << "trunk_conv = " << (c.trunk_conv ? "true" : "false") << '\n'
      << "upscale_channels = " << c.upscale_channels << '\n'
      << "kernel = " << c.kernel << '\n'
      << "dilation = " << c.dilation << '\n'
      << "attention = " << to_string(c.attention) << '\n'
      << "threshold = " << c.threshold << '\n'
      << "ca_reduction = " << c.ca_reduction << '\n'
      << "sa_kernel = " << c.sa_kernel << '\n';
  return out.str();
}

}  // namespace ikm
