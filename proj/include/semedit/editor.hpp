// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Residual attribute mappers, the edit algebra z + sum_i s_i * dz_i, the
// preservation / identity / direction objective and mapper training.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "semedit/autoencoder.hpp"
#include "semedit/autodiff.hpp"
#include "semedit/diffusion.hpp"
#include "semedit/nn.hpp"
#include "semedit/synthworld.hpp"

namespace semedit {

/// Four fully connected layers d_z -> h -> h -> h -> d_z. The last layer
/// starts at zero, so a fresh mapper is a no-op edit.
template <typename Scalar>
struct MapperNetwork {
  nn::Mlp<Scalar> net;

  MapperNetwork() = default;
  MapperNetwork(int d_z, int hidden, std::mt19937_64& rng)
      : net({d_z, hidden, hidden, hidden, d_z}, rng, nn::Activation::leaky_relu, /*zero_last=*/true) {}

  int d_z() const { return static_cast<int>(net.in()); }

  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& z) {
    if (z.rows() != net.in()) throw ArgumentError("mapper: code length does not match d_z");
    return net(tape, z);
  }

  /// dz for each code column.
  Matrix<Scalar> delta(const Matrix<Scalar>& z) {
    Tape<Scalar> tape;
    return (*this)(tape, tape.constant(z)).value();
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> out;
    net.collect(out, "mapper");
    return out;
  }
};

struct LossWeights {
  double pre = 0.2;
  double id = 0.5;
  double dir = 2.0;

  /// Throws ConfigError unless all weights are >= 0 and not all zero.
  void validate() const;
};

struct MapperMeta {
  std::string y_tar;
  std::string y_ref = "face";
  LossWeights weights;
  std::uint64_t seed = 0;
  long iterations = 0;
  int batch = 0;
  double lr = 0.0;
  std::string optimizer = "adam";
  int t_sample = 8;
  SmsMode sms = SmsMode::on;
  bool squared_norm = false;
  double direction_min_norm = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double heldout_initial = 0.0;
  double heldout_final = 0.0;
  std::vector<std::pair<long, double>> loss_series;
};

struct AttributeMapper {
  int mapper_id = 0;
  std::string name;
  std::vector<std::string> aliases;
  MapperNetwork<float> network;
  MapperMeta meta;
};

/// z + s * network(z). Strengths outside [0, 1] are clamped with a warning.
Matrix<float> apply_edit(const Matrix<float>& z, double s, AttributeMapper& m);

struct EditDirective {
  AttributeMapper* mapper = nullptr;
  double strength = 0.0;
};

/// z0 + sum_i s_i * network_i(z0); every offset is evaluated at z0 and the
/// sum runs in mapper-id order. Duplicate mapper ids are rejected.
Matrix<float> activate(const Matrix<float>& z0, const std::vector<EditDirective>& directives);

double clamp_strength(double s);

// ---------------------------------------------------------------------------
// Losses. Batched arguments hold one sample per column; per-sample terms are
// averaged over the batch.

/// mean |x0 - decoded| + mean_j ||dz_j|| (or ||dz_j||^2 when `squared`).
template <typename Scalar>
Var<Scalar> loss_pre(const Var<Scalar>& x0, const Var<Scalar>& decoded, const Var<Scalar>& dz, bool squared = false) {
  if (x0.rows() != decoded.rows() || x0.cols() != decoded.cols()) throw ArgumentError("loss_pre: image shape mismatch");
  if (dz.cols() != x0.cols()) throw ArgumentError("loss_pre: one code offset per image required");
  const Var<Scalar> recon = ad::mean(ad::abs(x0 - decoded));
  const Var<Scalar> reg = squared ? ad::mean(ad::col_sum(ad::square(dz))) : ad::mean(ad::col_norm(dz));
  return recon + reg;
}

/// 1 - mean_j cos(emb_a_j, emb_b_j).
template <typename Scalar>
Var<Scalar> loss_id(const Var<Scalar>& emb_a, const Var<Scalar>& emb_b) {
  Tape<Scalar>& tape = *emb_a.tape();
  return tape.constant(Matrix<Scalar>::Ones(1, 1)) - ad::mean(ad::col_cosine(emb_a, emb_b));
}

template <typename Scalar>
Var<Scalar> loss_id(Tape<Scalar>& tape, const Var<Scalar>& img_a, const Var<Scalar>& img_b,
                    IdentityCritic<Scalar>& critic) {
  return loss_id(critic.embed(tape, img_a), critic.embed(tape, img_b));
}

/// 1 - mean_j cos(dI_j, dT). `min_norm` clamps ||dI_j|| from below (0 gives
/// the plain cosine, which rejects norms under 1e-12).
template <typename Scalar>
Var<Scalar> loss_direction(const Var<Scalar>& d_image, const Vector<double>& d_text, double min_norm = 0.0) {
  if (d_image.rows() != d_text.size()) throw ArgumentError("loss_direction: embedding sizes differ");
  if (d_text.norm() < 1e-12) throw NumericError("loss_direction: degenerate text direction");
  if (min_norm <= 0.0) {
    const auto norms = d_image.value().colwise().norm();
    for (Eigen::Index j = 0; j < norms.size(); ++j)
      if (static_cast<double>(norms(j)) < 1e-12) throw NumericError("loss_direction: degenerate image direction");
  }
  Tape<Scalar>& tape = *d_image.tape();
  const Matrix<Scalar> dt = d_text.cast<Scalar>().replicate(1, d_image.cols());
  const Var<Scalar> cos = ad::col_cosine(d_image, tape.constant(dt), static_cast<Scalar>(min_norm));
  return tape.constant(Matrix<Scalar>::Ones(1, 1)) - ad::mean(cos);
}

template <typename Scalar>
Var<Scalar> loss_direction(Tape<Scalar>& tape, const Var<Scalar>& img_edit, const Var<Scalar>& img_ref,
                           const std::string& y_tar, const std::string& y_ref, DirectionCritic<Scalar>& critic,
                           double min_norm = 0.0) {
  const Vector<double> dt = critic.embed_text(y_tar) - critic.embed_text(y_ref);
  return loss_direction(critic.embed_image(tape, img_edit) - critic.embed_image(tape, img_ref), dt, min_norm);
}

struct LossComponents {
  double pre = 0.0;
  double id = 0.0;
  double dir = 0.0;
};

template <typename Scalar>
Var<Scalar> total_loss(const Var<Scalar>& pre, const Var<Scalar>& id, const Var<Scalar>& dir, const LossWeights& w) {
  return static_cast<Scalar>(w.pre) * pre + static_cast<Scalar>(w.id) * id + static_cast<Scalar>(w.dir) * dir;
}

double total_loss(const LossComponents& c, const LossWeights& w);

/// Scalar conveniences for single samples.
double loss_pre(const Vector<double>& x0, const Vector<double>& decoded, const Vector<double>& dz,
                bool squared = false);
double loss_id(const Vector<double>& emb_a, const Vector<double>& emb_b);
double loss_direction(const Vector<double>& d_image, const Vector<double>& d_text);

// ---------------------------------------------------------------------------
// Editing through the sampler

/// Decodes edited codes through the SMS path; z and z_edit hold one code per column.
template <typename Scalar>
Matrix<Scalar> decode_edit(DiffusionAutoencoder<Scalar>& model, const Matrix<Scalar>& x_T, const Matrix<Scalar>& z,
                           const Matrix<Scalar>& z_edit, const StepGrid& grid, SmsMode mode = SmsMode::on) {
  return generate(x_T, sms_trajectory(z, z_edit, grid, mode), grid, model.eps_fn(), model.schedule);
}

/// Everything the three losses need for one batch, differentiable w.r.t. the mapper.
template <typename Scalar>
struct EditForward {
  Var<Scalar> dz, decoded, pre, id, dir, total;
};

/// Cached per-face quantities of the frozen source decode D(z0).
template <typename Scalar>
struct EditBatch {
  Matrix<Scalar> x0;        // source images
  Matrix<Scalar> z0;        // semantic codes
  Matrix<Scalar> x_T;       // inverted stochastic codes
  Matrix<Scalar> ref_dir;   // E_I(D(z0))
  Matrix<Scalar> ref_id;    // R(D(z0))
};

struct EditObjective {
  std::string y_tar;
  std::string y_ref = "face";
  LossWeights weights;
  double strength = 1.0;
  SmsMode sms = SmsMode::on;
  bool squared_norm = false;
  double direction_min_norm = 0.0;
};

template <typename Scalar>
EditForward<Scalar> edit_forward(Tape<Scalar>& tape, DiffusionAutoencoder<Scalar>& model, MapperNetwork<Scalar>& mapper,
                                 const EditBatch<Scalar>& b, DirectionCritic<Scalar>& dcrit,
                                 IdentityCritic<Scalar>& icrit, const StepGrid& grid, const EditObjective& obj) {
  EditForward<Scalar> f;
  const Var<Scalar> z0 = tape.constant(b.z0);
  f.dz = mapper(tape, z0);
  const Var<Scalar> z_edit = z0 + static_cast<Scalar>(obj.strength) * f.dz;
  const auto traj = sms_trajectory(z0, z_edit, grid, obj.sms);
  f.decoded = generate(tape.constant(b.x_T), traj, grid, model.eps_fn(tape), model.schedule);
  f.pre = loss_pre(tape.constant(b.x0), f.decoded, f.dz, obj.squared_norm);
  f.id = loss_id(icrit.embed(tape, f.decoded), tape.constant(b.ref_id));
  const Vector<double> dt = dcrit.embed_text(obj.y_tar) - dcrit.embed_text(obj.y_ref);
  f.dir = loss_direction(dcrit.embed_image(tape, f.decoded) - tape.constant(b.ref_dir), dt, obj.direction_min_norm);
  f.total = total_loss(f.pre, f.id, f.dir, obj.weights);
  return f;
}

struct MapperTraining {
  int mapper_id = 0;
  std::string name;
  std::vector<std::string> aliases;
  long iterations = 2000;
  int batch = 8;
  double lr = 0.02;
  double lr_floor = 0.1;
  long warmup = 50;
  double grad_clip = 1.0;
  int hidden = 0;  // 0 selects d_z
  int t_sample = 8;
  int pool = 512;        // cached training faces
  int heldout = 32;      // faces for the held-out loss
  std::uint64_t seed = 0;
  std::uint64_t face_seed = 7001;
  int log_every = 50;
  EditObjective objective;
};

/// Caches x0, z0, x_T and the critic embeddings of D(z0) for images.
EditBatch<float> prepare_batch(DiffusionAutoencoder<float>& model, const Matrix<float>& images,
                               DirectionCritic<float>& dcrit, IdentityCritic<float>& icrit, const StepGrid& grid);

/// Trains one mapper against the frozen checkpoint. Throws ConfigError for a
/// non-differentiable critic and TrainingError on a non-finite loss.
AttributeMapper train_mapper(const DaeCheckpoint& ckpt, CriticSet& critics, const MapperTraining& cfg);

void save_mapper(const AttributeMapper& m, const std::filesystem::path& dir);
AttributeMapper load_mapper(const std::filesystem::path& dir);
std::string mapper_manifest(const AttributeMapper& m);

}  // namespace semedit
