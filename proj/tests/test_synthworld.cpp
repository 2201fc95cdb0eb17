// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "doctest.h"
#include "semedit/synthworld.hpp"

using namespace semedit;

namespace {

FaceParams face(std::uint64_t seed) { return sample_faces(1, seed).front(); }

// Max |a - b| over pixels outside `box`, and the count of pixels that differ inside it.
std::pair<double, int> split_diff(const Vector<float>& a, const Vector<float>& b, const PixelBox& box) {
  double outside = 0.0;
  int inside = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) {
        const Eigen::Index i = (static_cast<Eigen::Index>(y) * 32 + x) * 3 + c;
        const double d = std::abs(static_cast<double>(a(i)) - b(i));
        if (box.contains(x, y))
          inside += d > 0.0;
        else
          outside = std::max(outside, d);
      }
  return {outside, inside};
}

}  // namespace

TEST_CASE("sample_faces: determinism, ranges and errors") {
  CHECK(sample_faces(5, 7) == sample_faces(5, 7));
  CHECK(sample_faces(5, 7) != sample_faces(5, 8));
  for (std::uint64_t seed : {0u, 1u, 99u}) CHECK(valid(face(seed)));
  for (const auto& p : sample_faces(200, 3)) REQUIRE(valid(p));
  CHECK_THROWS_AS(sample_faces(0, 1), ArgumentError);

  FaceParams bad = face(1);
  bad[Attribute::smile] = 1.2;
  CHECK_FALSE(valid(bad));
  bad = face(1);
  bad.identity[0] = -1.5;
  CHECK_FALSE(valid(bad));
}

TEST_CASE("sample_faces: attribute means are near one half") {
  const auto faces = sample_faces(1000, 1);
  for (int a = 0; a < kAttributeCount; ++a) {
    double mean = 0.0;
    for (const auto& p : faces) mean += p.attributes[static_cast<std::size_t>(a)];
    mean /= static_cast<double>(faces.size());
    CAPTURE(kAttributeNames[static_cast<std::size_t>(a)]);
    CHECK(mean >= 0.45);
    CHECK(mean <= 0.55);
  }
}

TEST_CASE("render: range, purity and batch layout") {
  const auto faces = sample_faces(6, 11);
  const Matrix<float> batch = render_batch(faces);
  REQUIRE(batch.rows() == kFaceShape.size());
  REQUIRE(batch.cols() == 6);
  CHECK(batch.minCoeff() >= -1.0f);
  CHECK(batch.maxCoeff() <= 1.0f);
  for (int j = 0; j < 6; ++j) CHECK(batch.col(j) == render(faces[static_cast<std::size_t>(j)]));
  CHECK(render(faces[0]) == render(faces[0]));
}

TEST_CASE("render: smile only touches the mouth region") {
  const PixelBox box = mouth_region();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    FaceParams p = face(seed);
    p[Attribute::smile] = std::min(p[Attribute::smile], 0.7);
    FaceParams q = p;
    q[Attribute::smile] += 0.3;
    const auto [outside, inside] = split_diff(render(p), render(q), box);
    REQUIRE(outside < 1e-6);
    REQUIRE(inside > 0);
  }
}

TEST_CASE("render: zero glasses draws no frame") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    FaceParams p = face(seed);
    p[Attribute::glasses] = 0.0;
    FaceParams tiny = p;
    tiny[Attribute::glasses] = 1e-9;
    FaceParams on = p;
    on[Attribute::glasses] = 1.0;
    const Vector<float> none = render(p);
    // The frame fades in continuously from zero and is visible at one.
    REQUIRE((render(tiny) - none).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE((render(on) - none).cwiseAbs().maxCoeff() > 0.3);
  }
}

TEST_CASE("render: continuous in smile") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 0.999);
  for (int trial = 0; trial < 40; ++trial) {
    FaceParams p = face(static_cast<std::uint64_t>(trial));
    const double s0 = u(rng);
    Vector<float> prev;
    for (int k = 0; k <= 10; ++k) {
      p[Attribute::smile] = std::min(1.0, s0 + 1e-4 * k);
      const Vector<float> img = render(p);
      if (k > 0) REQUIRE((img - prev).cwiseAbs().maxCoeff() < 0.05);
      prev = img;
    }
    FaceParams a = p, b = p;
    a[Attribute::smile] = s0;
    b[Attribute::smile] = s0 + 1e-3;
    REQUIRE((render(a) - render(b)).cwiseAbs().maxCoeff() < 0.05);
  }
}

TEST_CASE("lexicon: axes, reference and lookup errors") {
  const TextLexicon lex;
  const Vector<double> smile = lex.embed("smile");
  CHECK(lex.embed("smile") == smile);
  const Vector<double> ref = lex.embed(TextLexicon::kReference);
  CHECK(ref.norm() == doctest::Approx(TextLexicon::kBaseLength));
  Vector<double> axis = Vector<double>::Zero(TextLexicon::kDim);
  axis(static_cast<int>(Attribute::smile)) = 1.0;
  CHECK(smile - ref == axis);
  CHECK((smile - ref).dot(lex.embed("curly hair") - ref) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(lex.embed("makeup") == lex.embed("lipstick"));
  CHECK(lex.embed("young") - ref == -(lex.embed("old") - ref));
  CHECK(embed_text("pale", lex) == lex.embed("pallor"));
  try {
    lex.embed("moustache");
    FAIL("expected a LookupError");
  } catch (const LookupError& e) {
    CHECK(e.candidates() == lex.phrases());
  }
  CHECK(lex.axis("glasses") == std::make_pair(Attribute::glasses, 1.0));
  CHECK(lex.axis("young") == std::make_pair(Attribute::age, -1.0));
  CHECK_FALSE(lex.axis(TextLexicon::kReference).has_value());
}

TEST_CASE("lexicon: distinct attribute axes are orthogonal relative to the reference") {
  const TextLexicon lex;
  const Vector<double> ref = lex.embed(TextLexicon::kReference);
  const auto phrases = lex.phrases();
  for (const auto& a : phrases)
    for (const auto& b : phrases) {
      if (a == TextLexicon::kReference || b == TextLexicon::kReference) continue;
      if (lex.axis(a)->first == lex.axis(b)->first) continue;
      CAPTURE(a);
      CAPTURE(b);
      CHECK((lex.embed(a) - ref).dot(lex.embed(b) - ref) == doctest::Approx(0.0).epsilon(1e-14));
    }
}

TEST_CASE("oracle: untrained use is a configuration error") {
  const AttributeOracle oracle;
  CHECK_FALSE(oracle.trained());
  CHECK_THROWS_AS(oracle.measure(render_batch(sample_faces(2, 1))), ConfigError);
}

TEST_CASE("critic targets") {
  const auto faces = sample_faces(4, 2);
  const Matrix<float> attrs = attribute_matrix(faces);
  CHECK(attrs.rows() == kAttributeCount);
  CHECK(attrs(static_cast<int>(Attribute::lipstick), 3) == static_cast<float>(faces[3][Attribute::lipstick]));
  CHECK(direction_targets(faces).rows() == DirectionCritic<float>::kDim);
  const Matrix<float> id = identity_targets(faces);
  CHECK(id.rows() == IdentityCritic<float>::kDim);
  for (Eigen::Index j = 0; j < id.cols(); ++j) CHECK(id.col(j).norm() > 0.2f);
}

TEST_CASE("dataset: parameter table round trip and persistence") {
  const auto faces = sample_faces(7, 4);
  CHECK(parse_params_table(params_table(faces)) == faces);
  const auto dir = std::filesystem::temp_directory_path() / "semedit_test_dataset";
  std::filesystem::remove_all(dir);
  save_dataset(dir, faces, 4);
  const Dataset back = load_dataset(dir);
  CHECK(back.seed == 4);
  CHECK(back.faces == faces);
  REQUIRE(back.images.cols() == 7);
  // PNGs hold 8-bit pixels.
  CHECK((back.images - render_batch(faces)).cwiseAbs().maxCoeff() <= 1.0f / 255.0f + 1e-6f);
  std::filesystem::remove_all(dir);
}
