// SPDX-License-Identifier: Apache-2.0
#include "vigunet/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "vigunet/losses.hpp"

namespace vigunet {

Tensor<float> stack_batch(const std::vector<Tensor<float>> &items) {
  if (items.empty())
    throw std::invalid_argument("stack_batch: no items");
  const Shape &s = items.front().shape();
  Shape out_shape{items.size()};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  std::vector<float> values;
  values.reserve(numel(out_shape));
  for (const auto &t : items) {
    if (t.shape() != s)
      throw ShapeError("stack_batch: " + to_string(t.shape()) + " vs " + to_string(s));
    values.insert(values.end(), t.data().begin(), t.data().end());
  }
  return Tensor<float>(std::move(out_shape), std::move(values));
}

EpochReport train_epoch(VigUnet<float> &m, const Dataset &data, AdamState<float> &adam,
                        const LrSchedule &schedule, std::size_t epoch,
                        const TrainOptions &opt, Rng &rng) {
  if (data.empty())
    throw std::invalid_argument("train_epoch: empty dataset");
  if (opt.batch_size == 0)
    throw std::invalid_argument("train_epoch: batch size must be positive");

  EpochReport report;
  report.epoch = epoch;
  report.lr = cosine_lr(schedule, epoch);
  adam.lr = report.lr;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(i + 1)]);

  auto params = m.parameters();
  for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
    const std::size_t end = std::min(order.size(), start + opt.batch_size);
    std::vector<Tensor<float>> imgs, masks;
    for (std::size_t i = start; i < end; ++i) {
      const auto &s = data[order[i]];
      if (opt.augment) {
        auto [a, b] = augment_sample(s.image, s.mask, rng, opt.augment_options,
                                     opt.norm ? &*opt.norm : nullptr);
        imgs.push_back(a);
        masks.push_back(b);
      } else {
        imgs.push_back(opt.norm ? normalize_image(s.image, *opt.norm) : s.image);
        masks.push_back(s.mask);
      }
    }
    m.zero_grad();
    Tensor<float> logits = model_forward(m, stack_batch(imgs), Mode::train, rng);
    Tensor<float> loss = mixed_loss(logits, stack_batch(masks));
    loss.backward();
    adam_step(std::span<Tensor<float>>(params), adam);
    report.batch_losses.push_back(loss.item());
  }
  report.mean_loss = std::accumulate(report.batch_losses.begin(), report.batch_losses.end(), 0.0) /
                     double(report.batch_losses.size());
  return report;
}

EvalReport evaluate(VigUnet<float> &m, const Dataset &data, const TrainOptions &opt) {
  if (data.empty())
    throw std::invalid_argument("evaluate: empty dataset");
  NoGradGuard no_grad;
  Rng unused(0);
  EvalReport r;
  const std::size_t bs = std::max<std::size_t>(opt.batch_size, 1);
  for (std::size_t start = 0; start < data.size(); start += bs) {
    const std::size_t end = std::min(data.size(), start + bs);
    std::vector<Tensor<float>> imgs;
    for (std::size_t i = start; i < end; ++i)
      imgs.push_back(opt.norm ? normalize_image(data[i].image, *opt.norm) : data[i].image);
    Tensor<float> logits = model_forward(m, stack_batch(imgs), Mode::eval, unused);
    const std::size_t per = logits.numel() / (end - start);
    for (std::size_t i = start; i < end; ++i) {
      const auto &mask = data[i].mask;
      if (mask.numel() != per)
        throw ShapeError("evaluate: mask " + to_string(mask.shape()) + " does not match output");
      std::vector<float> slice(logits.data().begin() + (i - start) * per,
                               logits.data().begin() + (i - start + 1) * per);
      const auto pred = threshold_logits(std::span<const float>(slice));
      std::vector<std::uint8_t> target(per);
      for (std::size_t p = 0; p < per; ++p)
        target[p] = mask[p] > 0.5f ? 1 : 0;
      r.iou.push_back(iou_metric(pred, target));
      r.dice.push_back(dice_metric(pred, target));

      Tensor<float> l(mask.shape(), std::move(slice));
      const double bce = bce_loss(l, mask).item();
      const double dl = dice_loss(l, mask).item();
      r.mean_bce += bce;
      r.mean_dice_loss += dl;
      r.mean_loss += kBceWeight * bce + dl;
    }
  }
  const double n = double(data.size());
  r.mean_iou = std::accumulate(r.iou.begin(), r.iou.end(), 0.0) / n;
  r.mean_dice = std::accumulate(r.dice.begin(), r.dice.end(), 0.0) / n;
  r.mean_bce /= n;
  r.mean_dice_loss /= n;
  r.mean_loss /= n;
  return r;
}

} // namespace vigunet
