// SPDX-License-Identifier: Apache-2.0
#include "vigunet/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace vigunet {

namespace {

using Kind = CheckpointError::Kind;

void put_u32(std::ostream &out, std::uint32_t v) {
  const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                     char((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream &in, const char *what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char *>(b), 4))
    throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

std::string get_bytes(std::istream &in, std::uint32_t n, const char *what) {
  if (n > (1u << 24))
    throw CheckpointError(Kind::truncated, std::string("implausible length for ") + what);
  std::string s(n, '\0');
  if (!in.read(s.data(), n))
    throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename U> U parse_number(std::string_view s, std::string_view key) {
  U v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("bad value '" + std::string(s) + "' for " + std::string(key));
  return v;
}

} // namespace

std::string serialize_model_config(const ModelConfig &cfg) {
  std::ostringstream os;
  os << "in_channels=" << cfg.in_channels << '\n'
     << "num_classes=" << cfg.num_classes << '\n'
     << "height=" << cfg.height << '\n'
     << "width=" << cfg.width << '\n'
     << "bottleneck_graphers=" << cfg.bottleneck_graphers << '\n'
     << "droppath_ramp=" << int(cfg.droppath_ramp) << '\n'
     << "skip_before_stage=" << int(cfg.skip_before_stage) << '\n';
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto &s = cfg.stages[i];
    os << "stage." << i << '=' << s.dim << ' ' << s.ffn_layers << ' ' << s.k << ' ' << s.heads
       << ' ' << s.ffn_ratio << ' ' << s.reduction << ' ' << format_double(s.droppath_rate)
       << '\n';
  }
  return os.str();
}

ModelConfig parse_model_config(std::string_view text) {
  ModelConfig cfg;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("malformed config echo line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "in_channels")
      cfg.in_channels = parse_number<std::size_t>(value, key);
    else if (key == "num_classes")
      cfg.num_classes = parse_number<std::size_t>(value, key);
    else if (key == "height")
      cfg.height = parse_number<std::size_t>(value, key);
    else if (key == "width")
      cfg.width = parse_number<std::size_t>(value, key);
    else if (key == "bottleneck_graphers")
      cfg.bottleneck_graphers = parse_number<std::size_t>(value, key);
    else if (key == "droppath_ramp")
      cfg.droppath_ramp = parse_number<int>(value, key) != 0;
    else if (key == "skip_before_stage")
      cfg.skip_before_stage = parse_number<int>(value, key) != 0;
    else if (key.starts_with("stage.")) {
      const auto idx = parse_number<std::size_t>(std::string_view(key).substr(6), key);
      std::istringstream fields(value);
      std::vector<std::string> parts;
      for (std::string f; fields >> f;)
        parts.push_back(f);
      if (parts.size() != 7 || idx != cfg.stages.size())
        throw ConfigError("malformed stage entry: " + line);
      StageConfig s;
      s.dim = parse_number<std::size_t>(parts[0], key);
      s.ffn_layers = parse_number<std::size_t>(parts[1], key);
      s.k = parse_number<std::size_t>(parts[2], key);
      s.heads = parse_number<std::size_t>(parts[3], key);
      s.ffn_ratio = parse_number<std::size_t>(parts[4], key);
      s.reduction = parse_number<std::size_t>(parts[5], key);
      s.droppath_rate = parse_number<double>(parts[6], key);
      cfg.stages.push_back(s);
    } else {
      throw ConfigError("unknown config echo key: " + key);
    }
  }
  return cfg;
}

void save_checkpoint(VigUnet<float> &m, const std::string &path,
                     const std::map<std::string, Tensor<float>> &extras) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw CheckpointError(Kind::io, "cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string echo = serialize_model_config(m.config);
  put_u32(out, std::uint32_t(echo.size()));
  out.write(echo.data(), std::streamsize(echo.size()));

  std::vector<std::pair<std::string, Tensor<float>>> entries;
  m.visit([&](const std::string &name, Tensor<float> &t, bool) { entries.emplace_back(name, t); });
  for (const auto &[name, t] : extras)
    entries.emplace_back(name, t);

  put_u32(out, std::uint32_t(entries.size()));
  for (const auto &[name, t] : entries) {
    put_u32(out, std::uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_tensor(out, t);
  }
  if (!out.flush())
    throw CheckpointError(Kind::io, "failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string &path,
                                 const std::optional<ModelConfig> &expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError(Kind::io, "cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4))
    throw CheckpointError(Kind::truncated, "checkpoint truncated in header: " + path);
  if (!std::equal(magic, magic + 4, kCheckpointMagic))
    throw CheckpointError(Kind::bad_magic, "not a checkpoint (bad magic): " + path);
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::version_mismatch,
                          "checkpoint version " + std::to_string(version) + ", expected " +
                            std::to_string(kCheckpointVersion));
  const std::string echo = get_bytes(in, get_u32(in, "config length"), "config echo");
  const ModelConfig stored = parse_model_config(echo);

  std::map<std::string, Tensor<float>> read;
  std::vector<std::string> order;
  const std::uint32_t count = get_u32(in, "entry count");
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name = get_bytes(in, get_u32(in, "name length"), "tensor name");
    Tensor<float> t = read_tensor(in);
    order.push_back(name);
    read.emplace(std::move(name), std::move(t));
  }

  // Weights are overwritten below; initialization randomness is irrelevant.
  Rng rng(0);
  LoadedCheckpoint out{build_vig_unet<float>(expected.value_or(stored), rng), {}};
  std::set<std::string> used;
  out.model.visit([&](const std::string &name, Tensor<float> &t, bool learnable) {
    auto it = read.find(name);
    if (it == read.end())
      throw CheckpointError(Kind::missing_tensor, "checkpoint lacks tensor " + name);
    if (it->second.shape() != t.shape())
      throw CheckpointError(Kind::shape_mismatch,
                            "shape mismatch for " + name + ": checkpoint " +
                              to_string(it->second.shape()) + ", model " + to_string(t.shape()));
    Tensor<float> v = it->second.detach();
    v.set_requires_grad(learnable);
    t = v;
    used.insert(name);
  });
  for (const auto &name : order)
    if (!used.count(name))
      out.extras.emplace(name, read.at(name));
  return out;
}

} // namespace vigunet
