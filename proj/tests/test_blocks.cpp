// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "support.hpp"
#include "vigunet/blocks.hpp"

using namespace vigunet;
using namespace vigunet::testing;

namespace {

void zero_conv(ConvParams<float> &p) {
  for (auto &v : p.weight.data())
    v = 0.0f;
  for (auto &v : p.bias.data())
    v = 0.0f;
}

bool identical(const Tensor<float> &a, const Tensor<float> &b) {
  if (a.shape() != b.shape())
    return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i])
      return false;
  return true;
}

} // namespace

TEST_CASE("grapher and ffn preserve shape") {
  Rng rng(1);
  for (auto [D, H] : {std::pair<std::size_t, std::size_t>{8, 32}, {16, 16}, {32, 8}, {64, 4}, {128, 2}}) {
    auto g = make_grapher<float>(D, {}, rng);
    auto f = make_ffn<float>(D, 4, 0.0, rng);
    auto x = random_tensor<float>({2, D, H, H}, rng);
    auto y = grapher_forward(x, g, Mode::train, rng);
    CHECK(y.shape() == x.shape());
    CHECK(ffn_forward(y, f, Mode::train, rng).shape() == x.shape());
    CHECK(ffn_forward(grapher_forward(x, g, Mode::eval, rng), f, Mode::eval, rng).shape() == x.shape());
  }
}

TEST_CASE("grapher with zero fc_out passes the input through") {
  Rng rng(2);
  auto g = make_grapher<float>(8, {}, rng);
  zero_conv(g.fc_out.conv);
  auto x = random_tensor<float>({2, 8, 4, 4}, rng);
  CHECK(identical(grapher_forward(x, g, Mode::train, rng), x));
  CHECK(identical(grapher_forward(x, g, Mode::eval, rng), x));
}

TEST_CASE("ffn with zero fc2 passes the input through") {
  Rng rng(3);
  auto f = make_ffn<float>(8, 4, 0.0, rng);
  zero_conv(f.fc2.conv);
  auto x = random_tensor<float>({2, 8, 4, 4}, rng);
  CHECK(identical(ffn_forward(x, f, Mode::train, rng), x));
  CHECK(identical(ffn_forward(x, f, Mode::eval, rng), x));
}

TEST_CASE("droppath rate 1 in train mode reduces the blocks to the identity") {
  Rng rng(4);
  GrapherOptions opt;
  opt.droppath_rate = 1.0;
  auto g = make_grapher<float>(8, opt, rng);
  auto f = make_ffn<float>(8, 4, 1.0, rng);
  auto x = random_tensor<float>({3, 8, 4, 4}, rng);
  CHECK(identical(grapher_forward(x, g, Mode::train, rng), x));
  CHECK(identical(ffn_forward(x, f, Mode::train, rng), x));
}

TEST_CASE("ffn hidden width follows the expansion ratio") {
  Rng rng(5);
  auto f = make_ffn<float>(8, 4, 0.0, rng);
  CHECK(f.hidden() == 32);
  CHECK(f.fc1.conv.weight.shape() == Shape{32, 8, 1, 1});
  CHECK(f.fc2.conv.weight.shape() == Shape{8, 32, 1, 1});
}

TEST_CASE("grapher internal widths") {
  Rng rng(6);
  auto g = make_grapher<float>(16, {.heads = 4, .k = 9, .reduction = 1, .droppath_rate = 0.0}, rng);
  CHECK(g.fc_in.conv.weight.shape() == Shape{16, 16, 1, 1});
  CHECK(g.heads.in_features() == 32);
  CHECK(g.heads.out_features() == 32);
  CHECK(g.heads.weight.shape() == Shape{4, 8, 8});
  CHECK(g.fc_out.conv.weight.shape() == Shape{16, 32, 1, 1});
  CHECK_THROWS(make_grapher<float>(6, {.heads = 8}, rng));
}

TEST_CASE("grapher with pooled candidates") {
  Rng rng(7);
  auto g = make_grapher<float>(8, {.heads = 4, .k = 9, .reduction = 2}, rng);
  auto x = random_tensor<float>({2, 8, 8, 8}, rng);
  CHECK(grapher_forward(x, g, Mode::train, rng).shape() == x.shape());
  CHECK_THROWS(grapher_forward(random_tensor<float>({1, 8, 5, 5}, rng), g, Mode::train, rng));
}

TEST_CASE("blocks are deterministic without droppath") {
  Rng rng(8);
  auto g = make_grapher<float>(8, {}, rng);
  auto f = make_ffn<float>(8, 4, 0.0, rng);
  auto x = random_tensor<float>({2, 8, 4, 4}, rng);
  Rng r1(1), r2(2);
  CHECK(identical(ffn_forward(grapher_forward(x, g, Mode::eval, r1), f, Mode::eval, r1),
                  ffn_forward(grapher_forward(x, g, Mode::eval, r2), f, Mode::eval, r2)));
}

TEST_CASE("stem halves the input and adds the position embedding") {
  Rng rng(9);
  auto s = make_stem<float>(3, 32, 64, 64, rng);
  auto x = random_tensor<float>({2, 3, 64, 64}, rng, 0.0, 1.0);
  auto y = stem_forward(x, s, Mode::eval);
  CHECK(y.shape() == Shape{2, 32, 32, 32});

  // Zero embedding is a no-op: compare against the conv chain alone.
  auto chain = gelu(s.conv2.forward(gelu(s.conv1.forward(x, Mode::eval)), Mode::eval));
  CHECK(identical(y, chain));
  s.pos_embed[5] = 2.0f;
  auto y2 = stem_forward(x, s, Mode::eval);
  CHECK(y2[5] == chain[5] + 2.0f);
  CHECK(y2[32 * 32 * 32 + 5] == chain[32 * 32 * 32 + 5] + 2.0f);
}

TEST_CASE("stem on 512x512 gives 256x256") {
  Rng rng(10);
  auto s = make_stem<float>(3, 32, 512, 512, rng);
  NoGradGuard ng;
  CHECK(stem_forward(Tensor<float>({1, 3, 512, 512}, 0.5f), s, Mode::eval).shape() ==
        Shape{1, 32, 256, 256});
}

TEST_CASE("down and up resampling") {
  Rng rng(11);
  auto down = make_resample<float>(32, Direction::down, rng);
  auto up = make_resample<float>(64, Direction::up, rng);
  auto x = random_tensor<float>({2, 32, 32, 32}, rng);
  auto d = downsample(x, down, Mode::train);
  CHECK(d.shape() == Shape{2, 64, 16, 16});
  CHECK(upsample(d, up, Mode::train).shape() == Shape{2, 32, 32, 32});
  CHECK_THROWS_AS(downsample(random_tensor<float>({1, 32, 7, 8}, rng), down, Mode::train),
                  std::invalid_argument);
  CHECK_THROWS_AS(upsample(x, down, Mode::train), std::invalid_argument);
  CHECK_THROWS_AS(make_resample<float>(7, Direction::up, rng), std::invalid_argument);
}

TEST_CASE("upsample with an identity conv keeps a constant constant") {
  Rng rng(12);
  auto up = make_resample<float>(4, Direction::up, rng);
  zero_conv(up.conv.conv);
  for (std::size_t o = 0; o < 2; ++o)
    up.conv.conv.weight[((o * 4 + o) * 3 + 1) * 3 + 1] = 1.0f; // centre tap
  auto y = upsample(Tensor<float>({1, 4, 3, 3}, 2.5f), up, Mode::eval);
  CHECK(y.shape() == Shape{1, 2, 6, 6});
  for (float v : y.data())
    CHECK(v == doctest::Approx(y[0]));
  CHECK(y[0] == doctest::Approx(2.5f / std::sqrt(1.0f + 1e-5f)));
}

TEST_CASE("grapher + ffn gradient matches finite differences") {
  Rng rng(13);
  auto g = make_grapher<double>(4, {.heads = 2, .k = 3}, rng);
  auto f = make_ffn<double>(4, 2, 0.0, rng);
  auto x = random_tensor<double>({2, 4, 3, 3}, rng);
  x.set_requires_grad(true);
  std::vector<Tensor<double>> params{x};
  auto collect = [&](const std::string &, Tensor<double> &t, bool learnable) {
    if (learnable)
      params.push_back(t);
  };
  g.visit("g", collect);
  f.visit("f", collect);
  auto w = random_weights(x.numel(), rng);
  auto loss = [&] {
    Rng r(0);
    return weighted_sum(ffn_forward(grapher_forward(x, g, Mode::train, r), f, Mode::train, r), w);
  };
  auto res = grad_check_fixed_graphs(loss, params, 1e-6);
  INFO("relative error " << res.rel_err());
  CHECK(res.rel_err() < 1e-4);
}

TEST_CASE("graph tape replays recorded graphs") {
  Rng rng(14);
  auto g = make_grapher<float>(8, {}, rng);
  auto x = random_tensor<float>({2, 8, 4, 4}, rng);
  GraphTape tape;
  auto y1 = grapher_forward(x, g, Mode::eval, rng);
  CHECK(tape.size() == 2);
  tape.replay();
  auto y2 = grapher_forward(x, g, Mode::eval, rng);
  CHECK(identical(y1, y2));
  CHECK(tape.size() == 2);
  CHECK_THROWS_AS(grapher_forward(x, g, Mode::eval, rng), StateError);
}
