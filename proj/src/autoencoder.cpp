// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/autoencoder.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "semedit/tensor_io.hpp"

namespace semedit {

namespace {

struct NoiseDraw {
  std::vector<int> ts;
  Matrix<float> eps;
};

NoiseDraw draw_noise(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, int t_train) {
  std::uniform_int_distribution<int> tdist(1, t_train);
  std::normal_distribution<float> ndist(0.0f, 1.0f);
  NoiseDraw d;
  d.ts.resize(static_cast<std::size_t>(cols));
  for (auto& t : d.ts) t = tdist(rng);
  d.eps.resize(rows, cols);
  for (Eigen::Index k = 0; k < d.eps.size(); ++k) d.eps.data()[k] = ndist(rng);
  return d;
}

}  // namespace

double heldout_loss(DiffusionAutoencoder<float>& model, const Matrix<float>& images, std::uint64_t seed,
                    const Matrix<float>* codes) {
  if (images.cols() == 0) throw ArgumentError("heldout_loss: empty image set");
  std::mt19937_64 rng(seed);
  constexpr Eigen::Index kChunk = 256;
  double total = 0.0;
  for (Eigen::Index start = 0; start < images.cols(); start += kChunk) {
    const Eigen::Index m = std::min(kChunk, images.cols() - start);
    const NoiseDraw d = draw_noise(rng, images.rows(), m, model.config.t_train);
    Matrix<float> zc;
    if (codes) zc = codes->middleCols(start, m);
    Tape<float> tape;
    const Matrix<float> x0 = images.middleCols(start, m);
    total += static_cast<double>(denoising_loss(tape, model, x0, d.ts, d.eps, codes ? &zc : nullptr).value()(0, 0)) *
             static_cast<double>(m);
  }
  return total / static_cast<double>(images.cols());
}

DaeCheckpoint train_dae(const Matrix<float>& images, const DaeConfig& cfg, const DaeTraining& train,
                        const Matrix<float>* heldout) {
  if (images.cols() == 0) throw ArgumentError("train_dae: dataset is empty");
  if (images.rows() != cfg.shape.size()) throw ArgumentError("train_dae: image size does not match the config");
  if (train.iterations < 1 || train.batch < 1) throw ConfigError("train_dae: iterations and batch must be >= 1");

  DaeCheckpoint ckpt;
  ckpt.model = DiffusionAutoencoder<float>(cfg);
  DiffusionAutoencoder<float>& model = ckpt.model;
  DaeTrainingMeta& meta = ckpt.meta;
  meta.seed = train.seed;
  meta.iterations = train.iterations;
  meta.batch = train.batch;
  meta.lr = train.lr;

  const std::uint64_t eval_seed = train.seed ^ 0xe7a1ULL;
  if (heldout) meta.heldout_initial = heldout_loss(model, *heldout, eval_seed);

  nn::Adam<float> opt(model.params(), {.lr = train.lr, .grad_clip = train.grad_clip});
  std::mt19937_64 rng(train.seed);
  const Eigen::Index n = images.cols();
  const Eigen::Index batch = std::min<Eigen::Index>(train.batch, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  Eigen::Index cursor = 0;

  double window = 0.0;
  long window_n = 0;
  Matrix<float> x0(images.rows(), batch);
  for (long it = 0; it < train.iterations; ++it) {
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      x0.col(j) = images.col(order[static_cast<std::size_t>(cursor++)]);
    }
    const NoiseDraw d = draw_noise(rng, images.rows(), batch, cfg.t_train);
    Tape<float> tape;
    Vector<float> w(batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
      const double ab = model.schedule.abar(d.ts[static_cast<std::size_t>(j)]);
      w(j) = static_cast<float>(std::clamp((1.0 - ab) / ab, 1.0, std::max(1.0, train.max_snr_weight)));
    }
    const Var<float> loss = denoising_loss(tape, model, x0, d.ts, d.eps, static_cast<const Matrix<float>*>(nullptr), train.max_snr_weight > 1.0 ? &w : nullptr);
    const double lv = static_cast<double>(loss.value()(0, 0));
    if (!std::isfinite(lv)) throw TrainingError("denoising loss is not finite", it);
    if (it == 0) meta.initial_loss = lv;
    opt.zero_grad();
    tape.backward(loss);
    opt.step(nn::cosine_lr(train.lr, it, train.iterations, train.warmup, train.lr_floor));
    window += lv;
    ++window_n;
    if ((it + 1) % std::max(1, train.log_every) == 0 || it + 1 == train.iterations) {
      meta.loss_series.emplace_back(it + 1, window / static_cast<double>(window_n));
      meta.final_loss = window / static_cast<double>(window_n);
      window = 0.0;
      window_n = 0;
    }
  }
  if (heldout) meta.heldout_final = heldout_loss(model, *heldout, eval_seed);
  return ckpt;
}

std::string checkpoint_manifest(const DaeCheckpoint& ckpt) {
  const DaeConfig& c = ckpt.model.config;
  nlohmann::ordered_json m;
  m["format"] = "semedit.dae/1";
  m["architecture"] = {
      {"denoiser", DaeConfig::kArchitecture},
      {"encoder_hidden", c.encoder_hidden},
      {"hidden", c.hidden},
      {"blocks", c.blocks},
      {"cond_dim", c.cond_dim},
      {"temb_dim", c.temb_dim},
      {"data_std", c.data_std},
      {"init_seed", c.init_seed},
  };
  m["d_z"] = c.d_z;
  m["image_shape"] = {c.shape.height, c.shape.width, c.shape.channels};
  m["schedule"] = {{"t_train", c.t_train}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
  const DaeTrainingMeta& t = ckpt.meta;
  m["training"] = {
      {"seed", t.seed},
      {"iterations", t.iterations},
      {"batch", t.batch},
      {"lr", t.lr},
      {"optimizer", "adam"},
      {"initial_loss", t.initial_loss},
      {"final_loss", t.final_loss},
      {"heldout_initial", t.heldout_initial},
      {"heldout_final", t.heldout_final},
  };
  m["tensors"] = {{"encoder", "encoder.tensors"}, {"denoiser", "denoiser.tensors"}};
  m["loss_series"] = "loss.tsv";
  return m.dump(2) + "\n";
}

void save_checkpoint(const DaeCheckpoint& ckpt_in, const std::filesystem::path& dir) {
  auto& ckpt = const_cast<DaeCheckpoint&>(ckpt_in);
  std::filesystem::create_directories(dir);
  nn::ParamList<float> enc, den;
  ckpt.model.encoder.collect(enc);
  ckpt.model.denoiser.collect(den);
  TensorContainer ce, cd;
  ce.put_params(enc);
  cd.put_params(den);
  ce.save(dir / "encoder.tensors");
  cd.save(dir / "denoiser.tensors");
  std::ostringstream series;
  series << "iteration\tloss\n";
  for (const auto& [it, loss] : ckpt.meta.loss_series) series << it << '\t' << loss << '\n';
  write_file(dir / "loss.tsv", series.str());
  write_file(dir / "manifest.json", checkpoint_manifest(ckpt));
}

DaeCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) throw IoError("no checkpoint manifest in " + dir.string());
  const auto m = nlohmann::json::parse(read_text(dir / "manifest.json"));
  if (m.value("format", std::string()) != "semedit.dae/1") throw IoError("unsupported checkpoint format");
  DaeConfig c;
  const auto& a = m.at("architecture");
  if (a.at("denoiser").get<std::string>() != DaeConfig::kArchitecture)
    throw IoError("unsupported denoiser architecture " + a.at("denoiser").get<std::string>());
  c.encoder_hidden = a.at("encoder_hidden").get<std::vector<Eigen::Index>>();
  c.hidden = a.at("hidden").get<int>();
  c.blocks = a.at("blocks").get<int>();
  c.cond_dim = a.at("cond_dim").get<int>();
  c.temb_dim = a.at("temb_dim").get<int>();
  c.data_std = a.at("data_std").get<double>();
  c.init_seed = a.at("init_seed").get<std::uint64_t>();
  c.d_z = m.at("d_z").get<int>();
  const auto shape = m.at("image_shape").get<std::vector<int>>();
  if (shape.size() != 3) throw IoError("image_shape must have three entries");
  c.shape = {shape[0], shape[1], shape[2]};
  const auto& s = m.at("schedule");
  c.t_train = s.at("t_train").get<int>();
  c.beta_start = s.at("beta_start").get<double>();
  c.beta_end = s.at("beta_end").get<double>();

  DaeCheckpoint ckpt;
  ckpt.model = DiffusionAutoencoder<float>(c);
  nn::ParamList<float> enc, den;
  ckpt.model.encoder.collect(enc);
  ckpt.model.denoiser.collect(den);
  TensorContainer::load(dir / "encoder.tensors").get_params(enc);
  TensorContainer::load(dir / "denoiser.tensors").get_params(den);

  const auto& t = m.at("training");
  ckpt.meta.seed = t.value("seed", std::uint64_t{0});
  ckpt.meta.iterations = t.value("iterations", 0L);
  ckpt.meta.batch = t.value("batch", 0);
  ckpt.meta.lr = t.value("lr", 0.0);
  ckpt.meta.initial_loss = t.value("initial_loss", 0.0);
  ckpt.meta.final_loss = t.value("final_loss", 0.0);
  ckpt.meta.heldout_initial = t.value("heldout_initial", 0.0);
  ckpt.meta.heldout_final = t.value("heldout_final", 0.0);
  return ckpt;
}

}  // namespace semedit
