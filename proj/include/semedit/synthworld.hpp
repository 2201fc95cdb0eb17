// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Procedural face world: parameter sampling, analytic rendering, the
// attribute oracle and the differentiable critics used for mapper training.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "semedit/autodiff.hpp"
#include "semedit/image_io.hpp"
#include "semedit/nn.hpp"
#include "semedit/tensor_io.hpp"

namespace semedit {

inline constexpr int kIdentityDim = 6;
inline constexpr int kAttributeCount = 6;

enum class Attribute : int { smile = 0, hair_curl = 1, glasses = 2, lipstick = 3, pallor = 4, age = 5 };

inline constexpr std::array<const char*, kAttributeCount> kAttributeNames = {"smile",    "hair_curl", "glasses",
                                                                              "lipstick", "pallor",    "age"};

std::optional<Attribute> attribute_from_name(const std::string& name);

/// Ground-truth generative parameters of one synthetic face.
struct FaceParams {
  std::array<double, kIdentityDim> identity{};     // head width, head height, eye spacing, skin hue, hair hue, eye size
  std::array<double, kAttributeCount> attributes{};  // indexed by Attribute

  double& operator[](Attribute a) { return attributes[static_cast<std::size_t>(a)]; }
  double operator[](Attribute a) const { return attributes[static_cast<std::size_t>(a)]; }
  bool operator==(const FaceParams&) const = default;
};

/// Checks identity in [-1, 1] and attributes in [0, 1].
bool valid(const FaceParams& p);

/// n faces with identity ~ U[-1, 1] and attributes ~ U[0, 1]; identical for identical seeds.
std::vector<FaceParams> sample_faces(int n, std::uint64_t seed);

inline constexpr ImageShape kFaceShape{32, 32, 3};

/// Renders a 32x32x3 image in [-1, 1] from smooth analytic primitives.
Vector<float> render(const FaceParams& p);

/// One rendered face per column.
Matrix<float> render_batch(const std::vector<FaceParams>& faces);

/// Pixel box (inclusive) that contains every pixel the mouth can touch.
struct PixelBox {
  int x0, y0, x1, y1;
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};
PixelBox mouth_region();

/// Attribute matrix (6 x n) with one face per column.
Matrix<float> attribute_matrix(const std::vector<FaceParams>& faces);

// ---------------------------------------------------------------------------
// Image embedders

/// MLP over flattened images; the common body of the oracle and critics.
template <typename Scalar>
struct ImageRegressor {
  nn::Mlp<Scalar> net;

  ImageRegressor() = default;
  ImageRegressor(int image_size, std::vector<Eigen::Index> hidden, int out, std::mt19937_64& rng) {
    std::vector<Eigen::Index> widths{image_size};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(out);
    net = nn::Mlp<Scalar>(widths, rng, nn::Activation::silu);
  }

  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& images) { return net(tape, images); }

  Matrix<Scalar> predict(const Matrix<Scalar>& images) {
    Tape<Scalar> tape;
    return net(tape, tape.constant(images)).value();
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> out;
    net.collect(out, "net");
    return out;
  }
};

struct RegressorTraining {
  std::vector<Eigen::Index> hidden{256, 128};
  int epochs = 30;
  int batch = 64;
  double lr = 1e-3;
  double input_noise = 0.02;  // std of Gaussian augmentation on pixels
  std::uint64_t seed = 0;
};

/// Fits an ImageRegressor to (image, target) columns by mean squared error.
/// Returns the final-epoch mean training loss.
double train_regressor(ImageRegressor<float>& model, const Matrix<float>& images, const Matrix<float>& targets,
                       const RegressorTraining& cfg);

/// Evaluation oracle: estimates the six attribute scalars of an image.
class AttributeOracle {
 public:
  AttributeOracle() = default;
  explicit AttributeOracle(ImageRegressor<float> model) : model_(std::move(model)), trained_(true) {}

  bool trained() const { return trained_; }

  /// Estimates per column, clamped to [0, 1]; throws ConfigError when untrained.
  Matrix<float> measure(const Matrix<float>& images) const;
  std::array<double, kAttributeCount> measure_one(const Vector<float>& image) const;

  ImageRegressor<float>& model() { return model_; }

  void save(const std::filesystem::path& path) const;
  static AttributeOracle load(const std::filesystem::path& path);

 private:
  mutable ImageRegressor<float> model_;
  bool trained_ = false;
};

// ---------------------------------------------------------------------------
// Text side of the direction critic

/// Fixed phrase -> embedding lexicon. The neutral reference phrase maps to a
/// short base vector on a dedicated axis; an attribute phrase maps to that
/// base plus its signed unit axis, so differences from the reference are
/// exactly orthogonal across attributes.
class TextLexicon {
 public:
  static constexpr int kDim = kAttributeCount + 1;
  static constexpr double kBaseLength = 0.1;
  static constexpr const char* kReference = "face";

  TextLexicon();

  Vector<double> embed(const std::string& phrase) const;  // throws LookupError
  bool contains(const std::string& phrase) const;
  std::vector<std::string> phrases() const;

  /// Attribute axis and sign the phrase refers to (none for the reference phrase).
  std::optional<std::pair<Attribute, double>> axis(const std::string& phrase) const;

 private:
  std::map<std::string, std::pair<int, double>> entries_;  // phrase -> (axis, signed length)
};

/// Image embedder plus lexicon: the CLIP stand-in for the direction loss.
template <typename Scalar>
struct DirectionCritic {
  static constexpr int kDim = TextLexicon::kDim;

  ImageRegressor<Scalar> image;  // image -> kDim
  TextLexicon text;
  bool differentiable = true;

  Var<Scalar> embed_image(Tape<Scalar>& tape, const Var<Scalar>& images) { return image(tape, images); }
  Matrix<Scalar> embed_image(const Matrix<Scalar>& images) { return image.predict(images); }
  Vector<double> embed_text(const std::string& phrase) const { return text.embed(phrase); }
};

/// ArcFace stand-in: image -> identity embedding.
template <typename Scalar>
struct IdentityCritic {
  static constexpr int kDim = kIdentityDim + 1;
  static constexpr double kOffset = 0.3;  // constant channel that keeps embeddings away from the origin

  ImageRegressor<Scalar> image;

  Var<Scalar> embed(Tape<Scalar>& tape, const Var<Scalar>& images) { return image(tape, images); }
  Matrix<Scalar> embed(const Matrix<Scalar>& images) { return image.predict(images); }
};

/// Regression targets used to fit the critics.
Matrix<float> direction_targets(const std::vector<FaceParams>& faces);
Matrix<float> identity_targets(const std::vector<FaceParams>& faces);

Vector<double> embed_text(const std::string& phrase, const TextLexicon& lexicon);

struct CriticTraining {
  int oracle_samples = 12000;
  int critic_samples = 10000;
  RegressorTraining regressor;
  std::uint64_t oracle_seed = 101;
  std::uint64_t direction_seed = 202;
  std::uint64_t identity_seed = 303;
};

struct CriticReport {
  std::array<double, kAttributeCount> oracle_mae{};
  double direction_rmse = 0.0;
  double identity_rmse = 0.0;
};

/// Bundle of trained synthetic-world networks.
struct CriticSet {
  AttributeOracle oracle;
  DirectionCritic<float> direction;
  IdentityCritic<float> identity;
  CriticTraining config;
  CriticReport report;
};

/// Trains oracle, direction critic and identity critic on disjoint seeds and
/// reports held-out fit quality.
CriticSet train_critics(const CriticTraining& cfg);

void save_critics(const CriticSet& critics, const std::filesystem::path& dir);
CriticSet load_critics(const std::filesystem::path& dir);

template <typename To>
DirectionCritic<To> cast_critic(DirectionCritic<float>& from) {
  DirectionCritic<To> out;
  std::mt19937_64 rng(0);
  out.image.net = nn::Mlp<To>(from.image.net.widths(), rng, from.image.net.activation);
  auto src = from.image.params();
  auto dst = out.image.params();
  nn::cast_params(src, dst);
  out.differentiable = from.differentiable;
  return out;
}

template <typename To>
IdentityCritic<To> cast_critic(IdentityCritic<float>& from) {
  IdentityCritic<To> out;
  std::mt19937_64 rng(0);
  out.image.net = nn::Mlp<To>(from.image.net.widths(), rng, from.image.net.activation);
  auto src = from.image.params();
  auto dst = out.image.params();
  nn::cast_params(src, dst);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset persistence

/// Writes manifest.json, params.tsv and images/NNNNN.png under dir.
void save_dataset(const std::filesystem::path& dir, const std::vector<FaceParams>& faces, std::uint64_t seed);

struct Dataset {
  std::uint64_t seed = 0;
  std::vector<FaceParams> faces;
  Matrix<float> images;  // decoded PNGs, one per column
};

Dataset load_dataset(const std::filesystem::path& dir);

std::string params_table(const std::vector<FaceParams>& faces);
std::vector<FaceParams> parse_params_table(const std::string& text);

}  // namespace semedit
