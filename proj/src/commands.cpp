// SPDX-License-Identifier: Apache-2.0
#include "vigunet/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vigunet/checkpoint.hpp"
#include "vigunet/image_io.hpp"
#include "vigunet/losses.hpp"

namespace vigunet {

namespace fs = std::filesystem;

namespace {

const char *const kNormMean = "data.norm_mean";
const char *const kNormStd = "data.norm_std";

std::map<std::string, Tensor<float>> norm_extras(const NormStats &s) {
  const std::size_t c = s.mean.size();
  return {{kNormMean, Tensor<float>({c}, s.mean)}, {kNormStd, Tensor<float>({c}, s.std)}};
}

std::optional<NormStats> norm_from_extras(const std::map<std::string, Tensor<float>> &extras) {
  const auto m = extras.find(kNormMean), s = extras.find(kNormStd);
  if (m == extras.end() || s == extras.end())
    return std::nullopt;
  NormStats st;
  st.mean.assign(m->second.data().begin(), m->second.data().end());
  st.std.assign(s->second.data().begin(), s->second.data().end());
  return st;
}

Dataset load_configured(const RunConfig &cfg) {
  return load_dataset(DatasetLayout{cfg.data_dir}, cfg.input_size, cfg.in_channels);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

} // namespace

TrainResult cmd_train(const RunConfig &cfg, std::ostream &log,
                      const std::optional<std::string> &out_dir) {
  const ModelConfig mcfg = cfg.to_model_config();
  const fs::path out = out_dir.value_or(cfg.out_dir);
  fs::create_directories(out);

  const Dataset all = load_configured(cfg);
  auto [train, val] = split_dataset(all, SplitSpec{cfg.split_ratio, cfg.split_seed});
  log << "dataset: " << all.size() << " samples, " << train.size() << " train / " << val.size()
      << " val\n";

  TrainOptions opt;
  opt.batch_size = cfg.batch_size;
  opt.augment = cfg.augment;
  if (cfg.normalize)
    opt.norm = compute_norm_stats(train);
  std::map<std::string, Tensor<float>> extras;
  if (opt.norm)
    extras = norm_extras(*opt.norm);

  Rng rng(cfg.seed);
  VigUnet<float> model = build_vig_unet<float>(mcfg, rng);
  Rng train_rng = rng.split();
  AdamState<float> adam;
  const LrSchedule schedule{cfg.lr_max, cfg.lr_min, cfg.epochs};

  TrainResult result;
  result.last_checkpoint = (out / "checkpoint_last.bin").string();
  result.best_checkpoint = (out / "checkpoint_best.bin").string();
  result.metrics_csv = (out / "metrics.csv").string();
  std::ofstream csv(result.metrics_csv);
  if (!csv)
    throw std::runtime_error("cannot write " + result.metrics_csv);
  csv << "epoch,lr,train_loss,val_iou,val_dice\n";

  double best = -1.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochReport rep = train_epoch(model, train, adam, schedule, epoch, opt, train_rng);
    EvalReport ev = evaluate(model, val, opt);
    csv << epoch << ',' << std::setprecision(9) << rep.lr << ',' << rep.mean_loss << ','
        << ev.mean_iou << ',' << ev.mean_dice << '\n';
    csv.flush();
    log << "epoch " << epoch + 1 << "/" << cfg.epochs << "  lr " << fmt(rep.lr) << "  loss "
        << fmt(rep.mean_loss) << "  val IoU " << fmt(ev.mean_iou) << "  val Dice "
        << fmt(ev.mean_dice) << '\n';
    save_checkpoint(model, result.last_checkpoint, extras);
    if (ev.mean_iou > best) {
      best = ev.mean_iou;
      save_checkpoint(model, result.best_checkpoint, extras);
    }
    result.epochs.push_back(std::move(rep));
  }
  result.best_val_iou = best;
  log << "best val IoU " << fmt(best) << "; checkpoints in " << out.string() << '\n';
  return result;
}

EvalReport cmd_eval(const RunConfig &cfg, const std::string &checkpoint, std::ostream &log,
                    EvalSubset subset, const std::optional<std::string> &per_sample_csv) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint, cfg.to_model_config());
  Dataset data = load_configured(cfg);
  if (subset == EvalSubset::val)
    data = split_dataset(data, SplitSpec{cfg.split_ratio, cfg.split_seed}).second;
  TrainOptions opt;
  opt.batch_size = cfg.batch_size;
  opt.norm = norm_from_extras(ck.extras);
  const EvalReport r = evaluate(ck.model, data, opt);
  if (per_sample_csv) {
    std::ofstream csv(*per_sample_csv);
    if (!csv)
      throw std::runtime_error("cannot write " + *per_sample_csv);
    csv << "path,iou,dice\n" << std::setprecision(9);
    for (std::size_t i = 0; i < data.size(); ++i)
      csv << data[i].path << ',' << r.iou[i] << ',' << r.dice[i] << '\n';
  }
  log << "samples " << data.size() << "  mean IoU " << fmt(r.mean_iou) << "  mean Dice "
      << fmt(r.mean_dice) << "  loss " << fmt(r.mean_loss) << " (bce " << fmt(r.mean_bce)
      << ", dice " << fmt(r.mean_dice_loss) << ")\n";
  return r;
}

void cmd_predict(const RunConfig &cfg, const std::string &checkpoint, const std::string &image,
                 const std::string &out_path, std::ostream &log) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint, cfg.to_model_config());
  const auto &mc = ck.model.config;
  const Image img = read_image(image, mc.in_channels);

  Tensor<float> x({img.channels, img.height, img.width});
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t xx = 0; xx < img.width; ++xx)
        x[(c * img.height + y) * img.width + xx] = float(img.at(y, xx, c)) / 255.0f;
  x = resize_bilinear(x, mc.height, mc.width);
  if (auto norm = norm_from_extras(ck.extras))
    x = normalize_image(x, *norm);

  Tensor<float> logits;
  {
    NoGradGuard no_grad;
    Rng unused(0);
    logits = model_forward(ck.model, stack_batch({x}), Mode::eval, unused);
  }
  const auto pred = threshold_logits(std::span<const float>(logits.data()));
  Tensor<float> small({1, mc.height, mc.width});
  for (std::size_t i = 0; i < pred.size(); ++i)
    small[i] = pred[i];
  const Tensor<float> full = resize_nearest(small, img.height, img.width);

  Image mask{img.width, img.height, 1, std::vector<std::uint8_t>(img.width * img.height)};
  std::size_t fg = 0;
  for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
    mask.pixels[i] = full[i] > 0.5f ? 255 : 0;
    fg += mask.pixels[i] != 0;
  }
  write_png(out_path, mask);
  log << "wrote " << out_path << " (" << img.width << "x" << img.height << ", "
      << fg << " foreground pixels)\n";
}

std::size_t cmd_info(const RunConfig &cfg, std::ostream &out) {
  const ModelConfig mcfg = cfg.to_model_config();
  Rng rng(cfg.seed);
  VigUnet<float> model = build_vig_unet<float>(mcfg, rng);
  const auto rows = summarize(model);

  out << "input " << mcfg.height << "x" << mcfg.width << "x" << mcfg.in_channels << ", dims";
  for (auto d : mcfg.dims())
    out << ' ' << d;
  out << "\n\n";
  out << std::left << std::setw(16) << "module" << std::setw(14) << "output size"
      << std::right << std::setw(10) << "channels" << std::setw(14) << "parameters" << '\n';
  std::size_t total = 0;
  for (const auto &r : rows) {
    const std::string size = std::to_string(r.height) + "x" + std::to_string(r.width);
    out << std::left << std::setw(16) << r.module << std::setw(14) << size << std::right
        << std::setw(10) << r.channels << std::setw(14) << r.parameters << '\n';
    total += r.parameters;
  }
  const std::size_t counted = count_parameters(model);
  if (counted != total)
    throw std::logic_error("parameter table does not add up to the model total");
  out << "\ntotal learnable parameters: " << total << " (" << std::fixed << std::setprecision(2)
      << double(total) / 1e6 << "M)\n" << std::defaultfloat;
  out << "note: the 0.7G figure quoted for ViG-UNet in published comparisons is not a count of\n"
         "      this layout's learnable parameters; the total above is reported as computed.\n";
  return total;
}

void cmd_gen(const RunConfig &cfg, std::ostream &log, const std::optional<std::string> &root,
             std::optional<std::size_t> count) {
  const std::string dir = root.value_or(cfg.data_dir);
  const std::size_t n = count.value_or(cfg.synthetic_count);
  Rng rng(cfg.seed);
  generate_synthetic(dir, n, cfg.input_size, rng);
  log << "wrote " << n << " synthetic " << cfg.input_size << "x" << cfg.input_size
      << " image/mask pairs to " << dir << '\n';
}

} // namespace vigunet
