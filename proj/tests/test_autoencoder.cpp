// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "doctest.h"
#include "semedit/autoencoder.hpp"
#include "semedit/synthworld.hpp"

using namespace semedit;

namespace {

// 4x4 box-downsampled renders: real face statistics at 8x8x3.
Matrix<float> small_faces(int n, std::uint64_t seed) {
  const Matrix<float> full = render_batch(sample_faces(n, seed));
  Matrix<float> out = Matrix<float>::Zero(8 * 8 * 3, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        for (int c = 0; c < 3; ++c)
          out(((y / 4) * 8 + x / 4) * 3 + c, j) += full((y * 32 + x) * 3 + c, j) / 16.0f;
  return out;
}

DaeConfig small_config() {
  DaeConfig cfg;
  cfg.shape = {8, 8, 3};
  cfg.d_z = 8;
  cfg.encoder_hidden = {64};
  cfg.hidden = 64;
  cfg.blocks = 2;
  cfg.cond_dim = 32;
  cfg.temb_dim = 16;
  cfg.init_seed = 4;
  return cfg;
}

DaeTraining small_training(long iterations) {
  DaeTraining t;
  t.iterations = iterations;
  t.batch = 16;
  t.lr = 2e-3;
  t.warmup = 50;
  t.max_snr_weight = 20.0;
  t.seed = 6;
  t.log_every = 50;
  return t;
}

struct Trained {
  Matrix<float> train, held;
  DaeCheckpoint ckpt;
};

Trained& trained() {
  static Trained t = [] {
    Trained out;
    out.train = small_faces(2000, 1);
    out.held = small_faces(200, 999);
    out.ckpt = train_dae(out.train, small_config(), small_training(4000), &out.held);
    return out;
  }();
  return t;
}

}  // namespace

TEST_CASE("encode: determinism, shape errors and the zero code") {
  DiffusionAutoencoder<float> model(small_config());
  const Matrix<float> x = small_faces(3, 2);
  CHECK(model.encode(x) == model.encode(x));
  CHECK(model.encode(x).rows() == 8);
  CHECK_THROWS_AS(model.encode(Matrix<float>::Zero(10, 1)), ArgumentError);

  DaeConfig cfg = small_config();
  cfg.zero_encoder_output = true;
  DiffusionAutoencoder<float> zeroed(cfg);
  CHECK(zeroed.encode(Matrix<float>::Zero(cfg.shape.size(), 2)).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("denoiser: output shape and finiteness") {
  DiffusionAutoencoder<float> model(small_config());
  const Matrix<float> x = small_faces(4, 3);
  const Matrix<float> z = model.encode(x);
  for (int t : {1, 50, 100}) {
    const Matrix<float> e = model.eps_fn()(x, t, z);
    CHECK(e.rows() == x.rows());
    CHECK(e.cols() == x.cols());
    CHECK(e.allFinite());
  }
}

TEST_CASE("reconstruct: a constant denoiser returns the input") {
  DiffusionAutoencoder<float> model(small_config());
  // A saturated gate keeps x0_hat = x_t / sqrt(abar_t), so eps_hat = 0 everywhere.
  model.denoiser.gate.value.setConstant(50.0f);
  CHECK(model.eps_fn()(small_faces(2, 9), 40, Matrix<float>::Ones(8, 2)).cwiseAbs().maxCoeff() == 0.0f);
  const Matrix<float> x = small_faces(3, 4);
  for (int T : {1, 8, 50}) CHECK(relative_l1(reconstruct(model, x, T), x) < 1e-5);
}

TEST_CASE("train_dae: argument errors and divergence") {
  const Matrix<float> x = small_faces(4, 5);
  CHECK_THROWS_AS(train_dae(Matrix<float>(192, 0), small_config(), small_training(5)), ArgumentError);
  CHECK_THROWS_AS(train_dae(Matrix<float>::Zero(10, 2), small_config(), small_training(5)), ArgumentError);
  CHECK_THROWS_AS(train_dae(x, small_config(), small_training(0)), ConfigError);
  Matrix<float> bad = x;
  bad(0, 0) = std::numeric_limits<float>::quiet_NaN();
  DaeTraining t = small_training(5);
  t.batch = 4;
  try {
    train_dae(bad, small_config(), t);
    FAIL("expected a TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.iteration() == 0);
  }
}

TEST_CASE("train_dae: a fixed seed reproduces the final loss") {
  const Matrix<float> x = small_faces(64, 7);
  const DaeCheckpoint a = train_dae(x, small_config(), small_training(60));
  const DaeCheckpoint b = train_dae(x, small_config(), small_training(60));
  CHECK(a.meta.final_loss == b.meta.final_loss);
  CHECK(a.meta.loss_series == b.meta.loss_series);
  CHECK(a.meta.loss_series.size() == 2);
}

TEST_CASE("train_dae: held-out loss halves on 2k images") {
  const Trained& t = trained();
  CHECK(t.ckpt.meta.heldout_final < 0.5 * t.ckpt.meta.heldout_initial);
  CHECK(t.ckpt.meta.final_loss < t.ckpt.meta.initial_loss);
}

TEST_CASE("trained DAE: the semantic code is used") {
  Trained& t = trained();
  DiffusionAutoencoder<float>& model = t.ckpt.model;
  const Matrix<float> z = model.encode(t.held);
  // Each image paired with another image's code.
  Matrix<float> wrong(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) wrong.col(j) = z.col((j + 1) % z.cols());
  const double matched = heldout_loss(model, t.held, 17, &z);
  const double mismatched = heldout_loss(model, t.held, 17, &wrong);
  CHECK(matched < mismatched);
  CHECK(heldout_loss(model, t.held, 17) == matched);

  int distinct = 0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) distinct += (z.col(j) - wrong.col(j)).norm() > 0.0f;
  CHECK(distinct == z.cols());
}

TEST_CASE("trained DAE: reconstruction error falls with more sampling steps") {
  Trained& t = trained();
  std::vector<double> errs;
  for (int T : {4, 8, 20, 50}) {
    errs.push_back(relative_l1(reconstruct(t.ckpt.model, t.held, T), t.held));
    MESSAGE("T=" << T << " relative L1 " << errs.back());
  }
  for (std::size_t i = 1; i < errs.size(); ++i) CHECK(errs[i] <= errs[i - 1]);
}

TEST_CASE("train_dae: a single image is memorised") {
  const Matrix<float> x = small_faces(1, 8);
  DaeTraining t = small_training(2000);
  t.batch = 8;
  DaeCheckpoint ckpt = train_dae(x, small_config(), t);
  const double err = relative_l1(reconstruct(ckpt.model, x, 50), x);
  MESSAGE("single-image relative L1 " << err);
  CHECK(err < 0.02);
}

TEST_CASE("checkpoint: save and load round trip") {
  Trained& t = trained();
  const auto dir = std::filesystem::temp_directory_path() / "semedit_test_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(t.ckpt, dir);
  DaeCheckpoint back = load_checkpoint(dir);
  CHECK(checkpoint_manifest(back) == checkpoint_manifest(t.ckpt));
  CHECK(back.model.config.shape.size() == t.ckpt.model.config.shape.size());
  const Matrix<float> x = t.held.leftCols(5);
  CHECK(back.model.encode(x) == t.ckpt.model.encode(x));
  CHECK(reconstruct(back.model, x, 8) == reconstruct(t.ckpt.model, x, 8));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("cast_model: double copy agrees with float") {
  Trained& t = trained();
  DiffusionAutoencoder<double> d = cast_model<double>(t.ckpt.model);
  const Matrix<float> x = t.held.leftCols(4);
  const Matrix<double> zd = d.encode(x.cast<double>());
  CHECK((zd.cast<float>() - t.ckpt.model.encode(x)).cwiseAbs().maxCoeff() < 1e-4f);
}
