// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <bit>
#include <fstream>
#include <iterator>

#include "support.hpp"
#include "vigunet/checkpoint.hpp"

using namespace vigunet;
using namespace vigunet::testing;

namespace {

std::string slurp(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::string &path, const std::string &bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

CheckpointError::Kind load_error(const std::string &path, std::optional<ModelConfig> cfg = std::nullopt) {
  try {
    load_checkpoint(path, cfg);
  } catch (const CheckpointError &e) {
    return e.kind();
  }
  FAIL("load_checkpoint did not throw");
  return CheckpointError::Kind::io;
}

} // namespace

TEST_CASE("model config echo roundtrips") {
  auto cfg = ModelConfig::full();
  cfg.droppath_ramp = true;
  cfg.stages[3].droppath_rate = 0.125;
  cfg.skip_before_stage = true;
  CHECK(parse_model_config(serialize_model_config(cfg)) == cfg);
  CHECK_THROWS(parse_model_config("bogus=1\n"));
}

TEST_CASE("checkpoint roundtrip is bit exact") {
  const auto dir = scratch_dir("ckpt_roundtrip");
  Rng rng(1);
  auto m = build_vig_unet<float>(ModelConfig::desk(), rng);
  // Give running stats non-default values.
  model_forward(m, random_tensor<float>({2, 3, 64, 64}, rng), Mode::train, rng);
  std::map<std::string, Tensor<float>> extras{{"data.norm_mean", Tensor<float>({3}, 0.25f)}};
  const auto a = (dir / "a.bin").string(), b = (dir / "b.bin").string();
  save_checkpoint(m, a, extras);

  auto loaded = load_checkpoint(a);
  CHECK(loaded.model.config == m.config);
  REQUIRE(loaded.extras.count("data.norm_mean") == 1);
  CHECK(loaded.extras.at("data.norm_mean")[2] == 0.25f);

  std::vector<Tensor<float>> orig, back;
  m.visit([&](const std::string &, Tensor<float> &t, bool) { orig.push_back(t); });
  loaded.model.visit([&](const std::string &, Tensor<float> &t, bool) { back.push_back(t); });
  REQUIRE(orig.size() == back.size());
  bool same = true;
  for (std::size_t i = 0; i < orig.size(); ++i) {
    same = same && orig[i].shape() == back[i].shape();
    for (std::size_t j = 0; same && j < orig[i].numel(); ++j)
      same = std::bit_cast<std::uint32_t>(orig[i][j]) == std::bit_cast<std::uint32_t>(back[i][j]);
  }
  CHECK(same);

  save_checkpoint(loaded.model, b, loaded.extras);
  CHECK(slurp(a) == slurp(b));

  // Loaded parameters are trainable again.
  CHECK(loaded.model.parameters().front().requires_grad());
}

TEST_CASE("checkpoint load errors") {
  const auto dir = scratch_dir("ckpt_errors");
  Rng rng(2);
  auto m = build_vig_unet<float>(ModelConfig::desk(), rng);
  const auto good = (dir / "good.bin").string();
  save_checkpoint(m, good);
  const std::string bytes = slurp(good);

  CHECK(load_error((dir / "missing.bin").string()) == CheckpointError::Kind::io);

  const auto trunc = (dir / "trunc.bin").string();
  for (std::size_t cut : {std::size_t(2), std::size_t(10), bytes.size() / 2, bytes.size() - 1}) {
    spit(trunc, bytes.substr(0, cut));
    CHECK(load_error(trunc) == CheckpointError::Kind::truncated);
  }

  const auto magic = (dir / "magic.bin").string();
  spit(magic, "XXXX" + bytes.substr(4));
  CHECK(load_error(magic) == CheckpointError::Kind::bad_magic);

  const auto version = (dir / "version.bin").string();
  std::string v = bytes;
  v[4] = 7;
  spit(version, v);
  CHECK(load_error(version) == CheckpointError::Kind::version_mismatch);

  auto other = ModelConfig::desk();
  other.stages[0].ffn_ratio = 2;
  try {
    load_checkpoint(good, other);
    FAIL("expected a shape mismatch");
  } catch (const CheckpointError &e) {
    CHECK(e.kind() == CheckpointError::Kind::shape_mismatch);
    CHECK(std::string(e.what()).find("enc.0.ffn.fc1") != std::string::npos);
  }
}
