// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode gradients against central finite differences, in double.

#include "doctest.h"
#include "gradcheck.hpp"

using namespace semedit;
using namespace semedit::gradcheck;

TEST_CASE("gradients: autodiff primitives") {
  std::mt19937_64 rng(1);
  Param<double> a, b, w, m;
  m.value = randn(2, 4, rng);
  a.value = randn(4, 3, rng);
  b.value = randn(4, 3, rng);
  w.value = randn(1, 3, rng);
  nn::ParamList<double> params{{"a", &a}, {"b", &b}, {"w", &w}, {"m", &m}};
  const Vector<double> c = randn(3, 1, rng);
  using Fn = std::function<Var<double>(Tape<double>&)>;
  const std::vector<std::pair<const char*, Fn>> cases{
      {"matmul", [&](Tape<double>& t) { return ad::mean(ad::square(ad::matmul(t.parameter(m), t.parameter(a)))); }},
      {"cwise", [&](Tape<double>& t) { return ad::mean(ad::cwise_mul(t.parameter(a), ad::tanh(t.parameter(b)))); }},
      {"scale_cols", [&](Tape<double>& t) { return ad::mean(ad::scale_cols(ad::square(t.parameter(a)), t.parameter(w))); }},
      {"scale_cols_const", [&](Tape<double>& t) { return ad::mean(ad::scale_cols(ad::sigmoid(t.parameter(a)), c)); }},
      {"silu_leaky", [&](Tape<double>& t) { return ad::sum(ad::silu(t.parameter(a)) + ad::leaky_relu(t.parameter(b))); }},
      {"abs", [&](Tape<double>& t) { return ad::mean(ad::abs(t.parameter(a) - t.parameter(b))); }},
      {"col_norm", [&](Tape<double>& t) { return ad::mean(ad::col_norm(t.parameter(a))); }},
      {"col_cosine", [&](Tape<double>& t) { return ad::mean(ad::col_cosine(t.parameter(a), t.parameter(b))); }},
      {"col_cosine_clamped", [&](Tape<double>& t) { return ad::mean(ad::col_cosine(t.parameter(a), t.parameter(b), 50.0)); }},
      {"mse_concat", [&](Tape<double>& t) { return ad::mse(ad::concat_rows(t.parameter(a), t.parameter(w)), ad::concat_rows(t.parameter(b), t.parameter(w) * 2.0)); }},
      {"gather", [&](Tape<double>& t) { return ad::sum(ad::gather_cols(t.parameter(a), {2, 0, 2, 1})); }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    CHECK(gradient_error(params, fn) < 1e-6);
  }
}

TEST_CASE("gradients: denoising loss on a micro configuration") {
  for (std::uint64_t seed : {2u, 3u}) {
    const DenoiserErrors e = denoiser_errors(seed);
    CHECK(e.params >= 100);
    CHECK(e.params < 200);
    CHECK(e.plain < 1e-4);
    CHECK(e.weighted < 1e-4);
  }
}

TEST_CASE("denoising loss: unit weights equal the plain loss and weights scale columns") {
  DiffusionAutoencoder<double> model(micro_config());
  std::mt19937_64 rng(3);
  randomize(model.params(), rng, 0.5);
  const Mat x0 = randn(4, 3, rng), eps = randn(4, 3, rng);
  const std::vector<int> ts{2, 6, 9};
  Tape<double> t;
  const double plain = denoising_loss(t, model, x0, ts, eps).value()(0, 0);
  const Vector<double> ones = Vector<double>::Ones(3);
  CHECK(denoising_loss(t, model, x0, ts, eps, static_cast<const Mat*>(nullptr), &ones).value()(0, 0) ==
        doctest::Approx(plain).epsilon(1e-14));
  const Vector<double> w = (Vector<double>(3) << 2.0, 0.0, 1.0).finished();
  double want = 0.0;
  for (int j = 0; j < 3; ++j) {
    Tape<double> tj;
    want += w(j) * denoising_loss(tj, model, Mat(x0.col(j)), {ts[static_cast<std::size_t>(j)]}, Mat(eps.col(j)))
                       .value()(0, 0);
  }
  CHECK(denoising_loss(t, model, x0, ts, eps, static_cast<const Mat*>(nullptr), &w).value()(0, 0) ==
        doctest::Approx(want / 3.0).epsilon(1e-12));
}

TEST_CASE("gradients: editing losses through a 2-step SMS decode") {
  for (std::uint64_t seed : {11u, 12u}) {
    MicroEditSetup s = micro_edit(seed);
    for (SmsMode mode : {SmsMode::on, SmsMode::off}) {
      for (double tau : {0.0, 50.0}) {
        EditObjective obj;
        obj.y_tar = "smile";
        obj.sms = mode;
        obj.direction_min_norm = tau;
        CAPTURE(seed);
        CAPTURE(to_string(mode));
        CAPTURE(tau);
        const EditErrors e = edit_errors(s, obj);
        CHECK(e.pre < 1e-3);
        CHECK(e.id < 1e-3);
        CHECK(e.dir < 1e-3);
        CHECK(e.total < 1e-3);
      }
    }
    EditObjective sq;
    sq.y_tar = "young";
    sq.squared_norm = true;
    CHECK(edit_errors(s, sq).pre < 1e-3);
  }
}

TEST_CASE("gradients: the frozen DAE receives none") {
  MicroEditSetup s = micro_edit(21);
  EditObjective obj;
  obj.y_tar = "pale";
  auto dae = s.model.params();
  zero_grads(dae);
  Tape<double> t;
  t.backward(edit_forward(t, s.model, s.mapper, s.batch, s.dcrit, s.icrit, s.grid, obj).total);
  for (auto& [name, p] : dae) {
    CAPTURE(name);
    CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
  }
}
