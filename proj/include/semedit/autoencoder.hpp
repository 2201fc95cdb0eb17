// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Toy diffusion autoencoder: semantic encoder, z-conditioned denoiser,
// training loop and the encode/invert/generate reconstruction path.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "semedit/autodiff.hpp"
#include "semedit/diffusion.hpp"
#include "semedit/image_io.hpp"
#include "semedit/nn.hpp"

namespace semedit {

struct DaeConfig {
  ImageShape shape{};
  int d_z = 32;
  std::vector<Eigen::Index> encoder_hidden{256, 256};
  bool zero_encoder_output = false;
  int hidden = 256;
  int blocks = 3;
  int cond_dim = 128;
  int temb_dim = 32;
  int t_train = 100;
  double beta_start = 1e-3;
  double beta_end = 0.2;
  double data_std = 0.55;  // prior scale of pixels, sets the initial skip gate
  std::uint64_t init_seed = 0;

  /// Architecture tag written to checkpoint manifests.
  static constexpr const char* kArchitecture = "dense-film-residual";
};

/// Fixed sinusoidal timestep table: column t embeds timestep t in [0, t_train].
template <typename Scalar>
Matrix<Scalar> timestep_table(int dim, int t_train) {
  Matrix<Scalar> table(dim, t_train + 1);
  const int half = dim / 2;
  for (int t = 0; t <= t_train; ++t) {
    for (int k = 0; k < half; ++k) {
      const double freq = std::pow(1000.0, -static_cast<double>(k) / std::max(1, half));
      table(k, t) = static_cast<Scalar>(std::sin(t * freq));
      table(half + k, t) = static_cast<Scalar>(std::cos(t * freq));
    }
    if (dim % 2 == 1) table(dim - 1, t) = static_cast<Scalar>(static_cast<double>(t) / t_train);
  }
  return table;
}

template <typename Scalar>
struct SemanticEncoder {
  nn::Mlp<Scalar> net;

  SemanticEncoder() = default;
  SemanticEncoder(const DaeConfig& cfg, std::mt19937_64& rng) {
    std::vector<Eigen::Index> widths{cfg.shape.size()};
    widths.insert(widths.end(), cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
    widths.push_back(cfg.d_z);
    net = nn::Mlp<Scalar>(widths, rng, nn::Activation::silu, cfg.zero_encoder_output);
  }

  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& images) {
    if (images.rows() != net.in()) throw ArgumentError("encode: image size does not match the encoder input");
    return net(tape, images);
  }

  /// One code per image column.
  Matrix<Scalar> encode(const Matrix<Scalar>& images) {
    Tape<Scalar> tape;
    return (*this)(tape, tape.constant(images)).value();
  }

  void collect(nn::ParamList<Scalar>& out) { net.collect(out, "encoder"); }
};

/// eps_theta(x_t, t, z).
///
/// A dense residual stack whose blocks are modulated by FiLM from
/// [z; temb(t)]. The network head predicts a clean image `dec`; a learned
/// per-timestep gate w_t mixes it with the rescaled input,
///   x0_hat = w_t * x_t / sqrt(abar_t) + (1 - w_t) * dec,
/// and the noise estimate is the one consistent with x0_hat. Timestep 0 is
/// evaluated with the coefficients of timestep 1.
template <typename Scalar>
struct Denoiser {
  struct Block {
    nn::Linear<Scalar> fc1, fc2, film_scale, film_shift;
  };

  nn::Linear<Scalar> cond;
  nn::Linear<Scalar> input;
  std::vector<Block> blocks;
  nn::Linear<Scalar> output;
  Param<Scalar> gate;  // 1 x (t_train + 1), pre-sigmoid
  Matrix<Scalar> temb;
  std::vector<double> abar;  // abar[t], t in [0, t_train]

  Denoiser() = default;
  Denoiser(const DaeConfig& cfg, const NoiseSchedule& sched, std::mt19937_64& rng) {
    const Eigen::Index p = cfg.shape.size();
    cond = nn::Linear<Scalar>(cfg.d_z + cfg.temb_dim, cfg.cond_dim, rng);
    input = nn::Linear<Scalar>(p, cfg.hidden, rng);
    for (int b = 0; b < cfg.blocks; ++b) {
      Block blk;
      blk.fc1 = nn::Linear<Scalar>(cfg.hidden, cfg.hidden, rng);
      blk.fc2 = nn::Linear<Scalar>(cfg.hidden, cfg.hidden, rng, 0.5);
      blk.film_scale = nn::Linear<Scalar>::zero(cfg.cond_dim, cfg.hidden);
      blk.film_shift = nn::Linear<Scalar>::zero(cfg.cond_dim, cfg.hidden);
      blocks.push_back(std::move(blk));
    }
    output = nn::Linear<Scalar>(cfg.hidden, p, rng);
    temb = timestep_table<Scalar>(cfg.temb_dim, cfg.t_train);
    abar.resize(static_cast<std::size_t>(cfg.t_train + 1));
    gate = nn::zeros<Scalar>(1, cfg.t_train + 1);
    const double var = cfg.data_std * cfg.data_std;
    for (int t = 0; t <= cfg.t_train; ++t) {
      abar[static_cast<std::size_t>(t)] = sched.abar(t);
      const double ab = sched.abar(std::max(t, 1));
      const double w = var / (var + (1.0 - ab) / ab);
      gate.value(0, t) = static_cast<Scalar>(std::log(w / (1.0 - w)));
    }
  }

  int t_train() const { return static_cast<int>(abar.size()) - 1; }

  /// Batched noise estimate; column j uses timestep ts[j].
  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x, const std::vector<int>& ts, const Var<Scalar>& z) {
    const Eigen::Index n = x.cols();
    if (static_cast<Eigen::Index>(ts.size()) != n) throw ArgumentError("denoiser: one timestep per column required");
    if (x.rows() != input.in()) throw ArgumentError("denoiser: image size does not match the network");
    if (z.cols() != n || z.rows() + temb.rows() != cond.in())
      throw ArgumentError("denoiser: semantic code shape does not match");
    Matrix<Scalar> te(temb.rows(), n);
    Vector<Scalar> sqrt_ab(n), inv_std(n);
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      const int t = ts[static_cast<std::size_t>(j)];
      if (t < 0 || t > t_train()) throw ArgumentError("denoiser: timestep outside [0, t_train]");
      const int te_t = std::max(t, 1);
      te.col(j) = temb.col(t);
      const double ab = abar[static_cast<std::size_t>(te_t)];
      sqrt_ab(j) = static_cast<Scalar>(std::sqrt(ab));
      inv_std(j) = static_cast<Scalar>(1.0 / std::max(std::sqrt(1.0 - ab), detail::kMinNoiseStd));
      idx[static_cast<std::size_t>(j)] = te_t;
    }
    const Var<Scalar> c = ad::silu(cond(tape, ad::concat_rows(z, tape.constant(std::move(te)))));
    Var<Scalar> h = input(tape, x);
    for (auto& blk : blocks) {
      Var<Scalar> r = blk.fc1(tape, ad::silu(h));
      r = r + ad::cwise_mul(r, blk.film_scale(tape, c)) + blk.film_shift(tape, c);
      h = h + blk.fc2(tape, ad::silu(r));
    }
    const Var<Scalar> dec = output(tape, ad::silu(h));
    const Var<Scalar> w = ad::sigmoid(ad::gather_cols(tape.parameter(gate), std::move(idx)));
    const Var<Scalar> keep = tape.constant(Matrix<Scalar>::Ones(1, n)) - w;
    // eps_hat = (1 - w) * (x_t - sqrt(abar) * dec) / sqrt(1 - abar)
    return ad::scale_cols(ad::scale_cols(x - ad::scale_cols(dec, sqrt_ab), inv_std), keep);
  }

  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x, int t, const Var<Scalar>& z) {
    return (*this)(tape, x, std::vector<int>(static_cast<std::size_t>(x.cols()), t), z);
  }

  Matrix<Scalar> eval(const Matrix<Scalar>& x, int t, const Matrix<Scalar>& z) {
    Tape<Scalar> tape;
    return (*this)(tape, tape.constant(x), t, tape.constant(z)).value();
  }

  void collect(nn::ParamList<Scalar>& out) {
    cond.collect(out, "denoiser.cond");
    input.collect(out, "denoiser.input");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const std::string p = "denoiser.block" + std::to_string(b);
      blocks[b].fc1.collect(out, p + ".fc1");
      blocks[b].fc2.collect(out, p + ".fc2");
      blocks[b].film_scale.collect(out, p + ".film_scale");
      blocks[b].film_shift.collect(out, p + ".film_shift");
    }
    output.collect(out, "denoiser.output");
    out.emplace_back("denoiser.gate", &gate);
  }
};

template <typename Scalar>
struct DiffusionAutoencoder {
  DaeConfig config;
  NoiseSchedule schedule;
  SemanticEncoder<Scalar> encoder;
  Denoiser<Scalar> denoiser;

  DiffusionAutoencoder() = default;
  explicit DiffusionAutoencoder(const DaeConfig& cfg)
      : config(cfg), schedule(make_schedule(cfg.t_train, cfg.beta_start, cfg.beta_end)) {
    std::mt19937_64 rng(cfg.init_seed);
    encoder = SemanticEncoder<Scalar>(cfg, rng);
    denoiser = Denoiser<Scalar>(cfg, schedule, rng);
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> out;
    encoder.collect(out);
    denoiser.collect(out);
    return out;
  }

  void set_trainable(bool on) {
    for (auto& [name, p] : params()) p->trainable = on;
  }

  Matrix<Scalar> encode(const Matrix<Scalar>& images) {
    if (images.rows() != config.shape.size()) throw ArgumentError("encode: wrong image shape");
    return encoder.encode(images);
  }

  /// Denoiser as the (x, t, z) callable the samplers expect, on plain matrices.
  auto eps_fn() {
    return [this](const Matrix<Scalar>& x, int t, const Matrix<Scalar>& z) { return denoiser.eval(x, t, z); };
  }

  /// Same callable recording onto `tape`, for differentiating through the sampler.
  auto eps_fn(Tape<Scalar>& tape) {
    return [this, &tape](const Var<Scalar>& x, int t, const Var<Scalar>& z) { return denoiser(tape, x, t, z); };
  }
};

/// Denoising objective: mean over entries of (eps_hat(x_t, t, E(x0)) - eps)^2,
/// with one timestep per column. When `codes` is given it replaces E(x0);
/// `weights` scales each column's squared error.
template <typename Scalar>
Var<Scalar> denoising_loss(Tape<Scalar>& tape, DiffusionAutoencoder<Scalar>& model, const Matrix<Scalar>& x0,
                           const std::vector<int>& ts, const Matrix<Scalar>& eps,
                           const Matrix<Scalar>* codes = nullptr, const Vector<Scalar>* weights = nullptr) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw ArgumentError("denoising_loss: shape mismatch");
  Matrix<Scalar> xt(x0.rows(), x0.cols());
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const double ab = model.schedule.abar(ts[static_cast<std::size_t>(j)]);
    xt.col(j) = static_cast<Scalar>(std::sqrt(ab)) * x0.col(j) + static_cast<Scalar>(std::sqrt(1.0 - ab)) * eps.col(j);
  }
  const Var<Scalar> z = codes ? tape.constant(*codes) : model.encoder(tape, tape.constant(x0));
  const Var<Scalar> eps_hat = model.denoiser(tape, tape.constant(std::move(xt)), ts, z);
  if (!weights) return ad::mse(eps_hat, tape.constant(eps));
  return ad::mean(ad::scale_cols(ad::square(eps_hat - tape.constant(eps)), *weights));
}

/// (z, x_T) with one image per column.
template <typename Scalar>
struct LatentPair {
  Matrix<Scalar> z;
  Matrix<Scalar> x_T;
};

template <typename Scalar>
LatentPair<Scalar> encode_latents(DiffusionAutoencoder<Scalar>& model, const Matrix<Scalar>& images,
                               const StepGrid& grid, InversionTimestep query = InversionTimestep::source) {
  LatentPair<Scalar> out;
  out.z = model.encode(images);
  out.x_T = invert(images, out.z, grid, model.eps_fn(), model.schedule, query);
  return out;
}

/// encode -> invert with constant z -> generate with constant z.
template <typename Scalar>
Matrix<Scalar> reconstruct(DiffusionAutoencoder<Scalar>& model, const Matrix<Scalar>& images, int t_sample,
                           InversionTimestep query = InversionTimestep::source) {
  const StepGrid grid = make_grid(t_sample, model.config.t_train);
  const LatentPair<Scalar> lat = encode_latents(model, images, grid, query);
  return generate(lat.x_T, constant_trajectory(lat.z, grid), grid, model.eps_fn(), model.schedule);
}

/// mean |a - b| / mean |b|.
template <typename Scalar>
double relative_l1(const Matrix<Scalar>& estimate, const Matrix<Scalar>& reference) {
  const double denom = static_cast<double>(reference.cwiseAbs().sum());
  if (!(denom > 0.0)) throw NumericError("relative_l1: reference is zero");
  return static_cast<double>((estimate - reference).cwiseAbs().sum()) / denom;
}

// ---------------------------------------------------------------------------
// Training and checkpoints (float)

struct DaeTraining {
  long iterations = 20000;
  int batch = 32;
  double lr = 1e-3;
  double lr_floor = 0.05;
  long warmup = 200;
  double grad_clip = 1.0;
  double max_snr_weight = 1.0;  // per-sample weight min(max(1, 1 / snr_t), this); 1 is the plain loss
  std::uint64_t seed = 0;
  int log_every = 100;
};

struct DaeTrainingMeta {
  std::uint64_t seed = 0;
  long iterations = 0;
  int batch = 0;
  double lr = 0.0;
  double initial_loss = 0.0;    // first minibatch loss
  double final_loss = 0.0;      // mean of the last log window
  double heldout_initial = 0.0;
  double heldout_final = 0.0;
  std::vector<std::pair<long, double>> loss_series;
};

struct DaeCheckpoint {
  DiffusionAutoencoder<float> model;
  DaeTrainingMeta meta;
};

/// Fixed-noise held-out denoising loss; identical across calls.
double heldout_loss(DiffusionAutoencoder<float>& model, const Matrix<float>& images, std::uint64_t seed,
                    const Matrix<float>* codes = nullptr);

/// Trains encoder and denoiser jointly on image columns in [-1, 1].
/// Throws TrainingError if the loss becomes non-finite.
DaeCheckpoint train_dae(const Matrix<float>& images, const DaeConfig& cfg, const DaeTraining& train,
                        const Matrix<float>* heldout = nullptr);

void save_checkpoint(const DaeCheckpoint& ckpt, const std::filesystem::path& dir);
DaeCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Checkpoint manifest text; contains no timestamps.
std::string checkpoint_manifest(const DaeCheckpoint& ckpt);

template <typename To>
DiffusionAutoencoder<To> cast_model(DiffusionAutoencoder<float>& from) {
  DiffusionAutoencoder<To> out(from.config);
  auto src = from.params();
  auto dst = out.params();
  nn::cast_params(src, dst);
  return out;
}

}  // namespace semedit
