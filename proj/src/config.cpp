// SPDX-License-Identifier: Apache-2.0
#include "vigunet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>

namespace vigunet {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string &v) {
  std::uint64_t out = 0;
  const auto *end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end)
    throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string &v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string &v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on")
    return true;
  if (v == "false" || v == "0" || v == "no" || v == "off")
    return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string &v) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const std::string item = trim(v.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    out.push_back(parse_uint(item));
    if (comma == std::string::npos)
      break;
    start = comma + 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig &, const std::string &)>;

const std::map<std::string, Setter> &setters() {
  static const std::map<std::string, Setter> table = {
    {"dims", [](RunConfig &c, const std::string &v) { c.dims = parse_list(v); }},
    {"input_size", [](RunConfig &c, const std::string &v) { c.input_size = parse_uint(v); }},
    {"in_channels", [](RunConfig &c, const std::string &v) { c.in_channels = parse_uint(v); }},
    {"k", [](RunConfig &c, const std::string &v) { c.k = parse_uint(v); }},
    {"heads", [](RunConfig &c, const std::string &v) { c.heads = parse_uint(v); }},
    {"ffn_ratio", [](RunConfig &c, const std::string &v) { c.ffn_ratio = parse_uint(v); }},
    {"reduction", [](RunConfig &c, const std::string &v) { c.reduction = parse_list(v); }},
    {"droppath", [](RunConfig &c, const std::string &v) { c.droppath = parse_real(v); }},
    {"droppath_ramp", [](RunConfig &c, const std::string &v) { c.droppath_ramp = parse_bool(v); }},
    {"skip_before_stage", [](RunConfig &c, const std::string &v) { c.skip_before_stage = parse_bool(v); }},
    {"bottleneck_graphers", [](RunConfig &c, const std::string &v) { c.bottleneck_graphers = parse_uint(v); }},
    {"epochs", [](RunConfig &c, const std::string &v) { c.epochs = parse_uint(v); }},
    {"batch_size", [](RunConfig &c, const std::string &v) { c.batch_size = parse_uint(v); }},
    {"lr_max", [](RunConfig &c, const std::string &v) { c.lr_max = parse_real(v); }},
    {"lr_min", [](RunConfig &c, const std::string &v) { c.lr_min = parse_real(v); }},
    {"seed", [](RunConfig &c, const std::string &v) { c.seed = parse_uint(v); }},
    {"split_ratio", [](RunConfig &c, const std::string &v) { c.split_ratio = parse_real(v); }},
    {"split_seed", [](RunConfig &c, const std::string &v) { c.split_seed = parse_uint(v); }},
    {"augment", [](RunConfig &c, const std::string &v) { c.augment = parse_bool(v); }},
    {"normalize", [](RunConfig &c, const std::string &v) { c.normalize = parse_bool(v); }},
    {"data_dir", [](RunConfig &c, const std::string &v) { c.data_dir = v; }},
    {"out_dir", [](RunConfig &c, const std::string &v) { c.out_dir = v; }},
    {"synthetic_count", [](RunConfig &c, const std::string &v) { c.synthetic_count = parse_uint(v); }},
  };
  return table;
}

} // namespace

ModelConfig RunConfig::to_model_config() const {
  if (dims.size() != ModelConfig::kStages)
    throw ConfigError("dims needs " + std::to_string(ModelConfig::kStages) + " values, got " +
                      std::to_string(dims.size()));
  if (reduction.size() != ModelConfig::kStages)
    throw ConfigError("reduction needs " + std::to_string(ModelConfig::kStages) +
                      " values, got " + std::to_string(reduction.size()));
  ModelConfig m = ModelConfig::from_dims(dims, input_size, heads, k);
  m.in_channels = in_channels;
  m.bottleneck_graphers = bottleneck_graphers;
  m.droppath_ramp = droppath_ramp;
  m.skip_before_stage = skip_before_stage;
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    m.stages[i].ffn_ratio = ffn_ratio;
    m.stages[i].reduction = reduction[i];
    m.stages[i].droppath_rate = droppath;
  }
  m.validate();
  return m;
}

RunConfig parse_run_config(std::istream &in, const std::string &source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string &msg) {
    throw ConfigError(source + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end())
      fail("unknown key '" + key + "'");
    if (!seen.insert(key).second)
      fail("duplicate key '" + key + "'");
    if (value.empty())
      fail("missing value for '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument &e) {
      fail(key + ": " + e.what());
    }
  }
  if (!(cfg.lr_min < cfg.lr_max))
    throw ConfigError(source + ": lr_min must be below lr_max");
  if (!(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0))
    throw ConfigError(source + ": split_ratio must lie in (0, 1)");
  if (cfg.batch_size == 0)
    throw ConfigError(source + ": batch_size must be positive");
  if (cfg.epochs == 0)
    throw ConfigError(source + ": epochs must be positive");
  return cfg;
}

RunConfig load_run_config(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file " + path);
  return parse_run_config(in, path);
}

} // namespace vigunet
