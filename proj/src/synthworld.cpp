// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/synthworld.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "semedit/errors.hpp"

namespace semedit {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Rgb {
  double r, g, b;
};

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a.r + t * (b.r - a.r), a.g + t * (b.g - a.g), a.b + t * (b.b - a.b)};
}

Rgb scale(const Rgb& a, double k) { return {a.r * k, a.g * k, a.b * k}; }

double smoothstep(double e0, double e1, double x) {
  if (x <= e0) return 0.0;
  if (x >= e1) return 1.0;
  const double t = (x - e0) / (e1 - e0);
  return t * t * (3.0 - 2.0 * t);
}

// Coverage of a shape with signed distance d; exactly 0 for d >= aa.
double cover(double d, double aa) { return 1.0 - smoothstep(-aa, aa, d); }

// Approximate signed distance to an axis-aligned ellipse.
double ellipse_sd(double u, double v, double cx, double cy, double rx, double ry) {
  const double qx = (u - cx) / rx, qy = (v - cy) / ry;
  return (std::sqrt(qx * qx + qy * qy) - 1.0) * std::min(rx, ry);
}

constexpr double kAa = 0.75 / 32.0;

// Geometry shared by the renderer and mouth_region().
constexpr double kMouthCx = 0.5;
constexpr double kMouthCy = 0.68;
constexpr double kMouthHalfWidth = 0.14;
constexpr double kMouthCurve = 0.065;
constexpr double kMouthThickBase = 0.03;
constexpr double kMouthThickSmile = 0.025;

constexpr Rgb kBackground{0.30, 0.36, 0.45};

}  // namespace

std::optional<Attribute> attribute_from_name(const std::string& name) {
  for (int i = 0; i < kAttributeCount; ++i)
    if (name == kAttributeNames[static_cast<std::size_t>(i)]) return static_cast<Attribute>(i);
  return std::nullopt;
}

bool valid(const FaceParams& p) {
  for (double v : p.identity)
    if (!(v >= -1.0 && v <= 1.0)) return false;
  for (double v : p.attributes)
    if (!(v >= 0.0 && v <= 1.0)) return false;
  return true;
}

std::vector<FaceParams> sample_faces(int n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("sample_faces: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0), unit(0.0, 1.0);
  std::vector<FaceParams> out(static_cast<std::size_t>(n));
  for (auto& p : out) {
    for (auto& v : p.identity) v = sym(rng);
    for (auto& v : p.attributes) v = unit(rng);
  }
  return out;
}

PixelBox mouth_region() {
  const double pad = kAa + 1.0 / 32.0;
  const double thick = kMouthThickBase + kMouthThickSmile;
  const double u0 = kMouthCx - kMouthHalfWidth - pad, u1 = kMouthCx + kMouthHalfWidth + pad;
  const double v0 = kMouthCy - thick - pad, v1 = kMouthCy + kMouthCurve + thick + pad;
  auto px = [](double c) { return static_cast<int>(std::floor(c * 32.0)); };
  return {std::max(0, px(u0)), std::max(0, px(v0)), std::min(31, px(u1)), std::min(31, px(v1))};
}

Vector<float> render(const FaceParams& p) {
  const auto& id = p.identity;
  const double smile = p[Attribute::smile], curl = p[Attribute::hair_curl], glasses = p[Attribute::glasses];
  const double lipstick = p[Attribute::lipstick], pallor = p[Attribute::pallor], age = p[Attribute::age];

  const double head_cx = 0.5, head_cy = 0.53;
  const double head_rx = 0.25 + 0.035 * id[0], head_ry = 0.31 + 0.035 * id[1];
  const double eye_dx = 0.105 + 0.02 * id[2], eye_y = 0.47;
  const double eye_rx = 0.045 * (1.0 + 0.2 * id[5]), eye_ry = 0.03 * (1.0 + 0.2 * id[5]);

  Rgb skin{0.84 + 0.06 * id[3], 0.64 - 0.03 * id[3], 0.50 - 0.06 * id[3]};
  skin = mix(skin, Rgb{0.97, 0.95, 0.94}, 0.6 * pallor);
  Rgb hair = mix(Rgb{0.25, 0.15, 0.08}, Rgb{0.80, 0.62, 0.30}, 0.5 * (id[4] + 1.0));
  hair = mix(hair, Rgb{0.82, 0.82, 0.84}, 0.85 * age);
  const Rgb lips = mix(Rgb{0.62, 0.36, 0.34}, Rgb{0.82, 0.04, 0.14}, lipstick);
  const Rgb blush{0.92, 0.32, 0.40};
  const Rgb frame{0.06, 0.06, 0.08};

  const double hair_rx = head_rx + 0.07 + 0.09 * curl, hair_ry = head_ry + 0.04 + 0.06 * curl;
  const double mouth_half_thick = kMouthThickBase + kMouthThickSmile * smile;

  Vector<float> img(kFaceShape.size());
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const double u = (x + 0.5) / 32.0, v = (y + 0.5) / 32.0;
      Rgb c = kBackground;

      // Hair sits behind the head and fades out below the ears.
      const double hair_a = cover(ellipse_sd(u, v, head_cx, head_cy - 0.04, hair_rx, hair_ry), kAa) *
                            (1.0 - smoothstep(0.58, 0.70, v));
      if (hair_a > 0.0) {
        const double tex = 0.5 + 0.5 * std::sin(2.0 * kPi * 4.0 * u) * std::sin(2.0 * kPi * 4.0 * v);
        c = mix(c, scale(hair, 1.0 - 0.6 * curl * tex), hair_a);
      }

      const double head_a = cover(ellipse_sd(u, v, head_cx, head_cy, head_rx, head_ry), kAa);
      if (head_a > 0.0) {
        Rgb s = skin;
        for (double ly : {0.315, 0.350, 0.385}) {
          const double line = cover(std::abs(v - ly) - 0.008, kAa) * cover(std::abs(u - 0.5) - 0.13, kAa);
          s = mix(s, scale(skin, 0.5), 0.75 * age * line);
        }
        for (double side : {-1.0, 1.0}) {
          const double bag = cover(ellipse_sd(u, v, 0.5 + side * eye_dx, eye_y + 0.045, 0.05, 0.018), kAa);
          s = mix(s, scale(skin, 0.6), 0.7 * age * bag);
          const double cheek = cover(ellipse_sd(u, v, 0.5 + side * 0.15, 0.6, 0.065, 0.045), 2.0 * kAa);
          s = mix(s, blush, 0.6 * lipstick * cheek);
        }
        c = mix(c, s, head_a);
      }

      for (double side : {-1.0, 1.0}) {
        const double ex = 0.5 + side * eye_dx;
        const double white = cover(ellipse_sd(u, v, ex, eye_y, eye_rx, eye_ry), kAa);
        c = mix(c, Rgb{0.95, 0.95, 0.95}, white);
        const double pupil = cover(ellipse_sd(u, v, ex, eye_y, 0.45 * eye_rx, 0.8 * eye_ry), kAa);
        c = mix(c, Rgb{0.10, 0.08, 0.12}, pupil);
      }

      if (glasses > 0.0) {
        double ring = 0.0;
        for (double side : {-1.0, 1.0}) {
          const double ex = 0.5 + side * eye_dx;
          const double r = std::hypot(u - ex, v - eye_y);
          ring = std::max(ring, cover(std::abs(r - 0.085) - 0.012, kAa));
        }
        const double bridge_half = std::max(eye_dx - 0.085, 0.0);
        ring = std::max(ring, cover(std::abs(v - eye_y) - 0.01, kAa) * cover(std::abs(u - 0.5) - bridge_half, kAa));
        c = mix(c, frame, glasses * ring);
      }

      const double q = (u - kMouthCx) / kMouthHalfWidth;
      const double mouth_y = kMouthCy + kMouthCurve * smile * (1.0 - q * q);
      const double mouth_a =
          cover(std::abs(v - mouth_y) - mouth_half_thick, kAa) * cover(std::abs(u - kMouthCx) - kMouthHalfWidth, kAa);
      if (mouth_a > 0.0) c = mix(c, lips, mouth_a);

      const Eigen::Index base = (static_cast<Eigen::Index>(y) * 32 + x) * 3;
      img(base + 0) = static_cast<float>(std::clamp(c.r, 0.0, 1.0) * 2.0 - 1.0);
      img(base + 1) = static_cast<float>(std::clamp(c.g, 0.0, 1.0) * 2.0 - 1.0);
      img(base + 2) = static_cast<float>(std::clamp(c.b, 0.0, 1.0) * 2.0 - 1.0);
    }
  }
  return img;
}

Matrix<float> render_batch(const std::vector<FaceParams>& faces) {
  Matrix<float> out(kFaceShape.size(), static_cast<Eigen::Index>(faces.size()));
  for (std::size_t i = 0; i < faces.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = render(faces[i]);
  return out;
}

Matrix<float> attribute_matrix(const std::vector<FaceParams>& faces) {
  Matrix<float> out(kAttributeCount, static_cast<Eigen::Index>(faces.size()));
  for (std::size_t j = 0; j < faces.size(); ++j)
    for (int a = 0; a < kAttributeCount; ++a)
      out(a, static_cast<Eigen::Index>(j)) = static_cast<float>(faces[j].attributes[static_cast<std::size_t>(a)]);
  return out;
}

Matrix<float> direction_targets(const std::vector<FaceParams>& faces) {
  Matrix<float> out(TextLexicon::kDim, static_cast<Eigen::Index>(faces.size()));
  out.topRows(kAttributeCount) = attribute_matrix(faces);
  out.row(kAttributeCount).setOnes();
  return out;
}

Matrix<float> identity_targets(const std::vector<FaceParams>& faces) {
  Matrix<float> out(IdentityCritic<float>::kDim, static_cast<Eigen::Index>(faces.size()));
  for (std::size_t j = 0; j < faces.size(); ++j) {
    for (int k = 0; k < kIdentityDim; ++k)
      out(k, static_cast<Eigen::Index>(j)) = static_cast<float>(faces[j].identity[static_cast<std::size_t>(k)]);
    out(kIdentityDim, static_cast<Eigen::Index>(j)) = static_cast<float>(IdentityCritic<float>::kOffset);
  }
  return out;
}

// ---------------------------------------------------------------------------

double train_regressor(ImageRegressor<float>& model, const Matrix<float>& images, const Matrix<float>& targets,
                       const RegressorTraining& cfg) {
  if (images.cols() != targets.cols() || images.cols() == 0)
    throw ArgumentError("train_regressor: images and targets must have the same nonzero column count");
  const Eigen::Index n = images.cols();
  const Eigen::Index batch = std::min<Eigen::Index>(cfg.batch, n);
  const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total = steps_per_epoch * cfg.epochs;

  nn::Adam<float> opt(model.params(), {.lr = cfg.lr, .grad_clip = 5.0});
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.input_noise));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  double epoch_loss = 0.0;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      Matrix<float> xb(images.rows(), m), yb(targets.rows(), m);
      for (Eigen::Index j = 0; j < m; ++j) {
        xb.col(j) = images.col(order[static_cast<std::size_t>(start + j)]);
        yb.col(j) = targets.col(order[static_cast<std::size_t>(start + j)]);
      }
      if (cfg.input_noise > 0.0)
        for (Eigen::Index k = 0; k < xb.size(); ++k) xb.data()[k] += noise(rng);
      Tape<float> tape;
      auto loss = ad::mse(model(tape, tape.constant(xb)), tape.constant(yb));
      const double lv = static_cast<double>(loss.value()(0, 0));
      if (!std::isfinite(lv)) throw TrainingError("regressor loss is not finite", step);
      opt.zero_grad();
      tape.backward(loss);
      opt.step(nn::cosine_lr(cfg.lr, step, total, std::min<long>(100, total / 10)));
      epoch_loss += lv * static_cast<double>(m);
      ++step;
    }
    epoch_loss /= static_cast<double>(n);
  }
  return epoch_loss;
}

namespace {

void save_regressor(const ImageRegressor<float>& model_in, const std::filesystem::path& path) {
  auto& model = const_cast<ImageRegressor<float>&>(model_in);
  TensorContainer c;
  c.put_params(model.params());
  Tensor widths;
  for (auto w : model.net.widths()) widths.data.push_back(static_cast<float>(w));
  widths.dims = {static_cast<std::uint64_t>(widths.data.size())};
  c.put("arch.widths", widths);
  c.save(path);
}

ImageRegressor<float> load_regressor(const std::filesystem::path& path) {
  const TensorContainer c = TensorContainer::load(path);
  if (!c.contains("arch.widths")) throw IoError(path.string() + ": missing arch.widths");
  std::vector<Eigen::Index> widths;
  for (float w : c.get("arch.widths").data) widths.push_back(static_cast<Eigen::Index>(w));
  if (widths.size() < 2) throw IoError(path.string() + ": bad arch.widths");
  ImageRegressor<float> model;
  std::mt19937_64 rng(0);
  model.net = nn::Mlp<float>(widths, rng, nn::Activation::silu);
  auto params = model.params();
  c.get_params(params);
  return model;
}

}  // namespace

Matrix<float> AttributeOracle::measure(const Matrix<float>& images) const {
  if (!trained_) throw ConfigError("attribute oracle is not trained");
  if (images.rows() != kFaceShape.size()) throw ArgumentError("measure: image size does not match 32x32x3");
  return model_.predict(images).cwiseMax(0.0f).cwiseMin(1.0f);
}

std::array<double, kAttributeCount> AttributeOracle::measure_one(const Vector<float>& image) const {
  const Matrix<float> m = measure(Matrix<float>(image));
  std::array<double, kAttributeCount> out{};
  for (int a = 0; a < kAttributeCount; ++a) out[static_cast<std::size_t>(a)] = m(a, 0);
  return out;
}

void AttributeOracle::save(const std::filesystem::path& path) const {
  if (!trained_) throw ConfigError("cannot save an untrained oracle");
  save_regressor(model_, path);
}

AttributeOracle AttributeOracle::load(const std::filesystem::path& path) { return AttributeOracle(load_regressor(path)); }

// ---------------------------------------------------------------------------

TextLexicon::TextLexicon() {
  auto axis_of = [](Attribute a) { return static_cast<int>(a); };
  entries_ = {
      {kReference, {kAttributeCount, kBaseLength}},
      {"smile", {axis_of(Attribute::smile), 1.0}},
      {"hair curl", {axis_of(Attribute::hair_curl), 1.0}},
      {"curly hair", {axis_of(Attribute::hair_curl), 1.0}},
      {"glasses", {axis_of(Attribute::glasses), 1.0}},
      {"lipstick", {axis_of(Attribute::lipstick), 1.0}},
      {"red lipstick", {axis_of(Attribute::lipstick), 1.0}},
      {"makeup", {axis_of(Attribute::lipstick), 1.0}},
      {"pallor", {axis_of(Attribute::pallor), 1.0}},
      {"pale", {axis_of(Attribute::pallor), 1.0}},
      {"age", {axis_of(Attribute::age), 1.0}},
      {"old", {axis_of(Attribute::age), 1.0}},
      {"young", {axis_of(Attribute::age), -1.0}},
  };
}

bool TextLexicon::contains(const std::string& phrase) const { return entries_.count(phrase) != 0; }

std::vector<std::string> TextLexicon::phrases() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

Vector<double> TextLexicon::embed(const std::string& phrase) const {
  const auto it = entries_.find(phrase);
  if (it == entries_.end()) {
    std::string known;
    for (const auto& k : phrases()) known += (known.empty() ? "" : ", ") + k;
    throw LookupError("unknown text phrase '" + phrase + "'; known phrases: " + known, phrases());
  }
  Vector<double> e = Vector<double>::Zero(kDim);
  e(kAttributeCount) = kBaseLength;
  if (it->second.first < kAttributeCount) e(it->second.first) = it->second.second;
  return e;
}

std::optional<std::pair<Attribute, double>> TextLexicon::axis(const std::string& phrase) const {
  const auto it = entries_.find(phrase);
  if (it == entries_.end() || it->second.first >= kAttributeCount) return std::nullopt;
  return std::make_pair(static_cast<Attribute>(it->second.first), it->second.second > 0 ? 1.0 : -1.0);
}

Vector<double> embed_text(const std::string& phrase, const TextLexicon& lexicon) { return lexicon.embed(phrase); }

// ---------------------------------------------------------------------------

namespace {

double rmse(const Matrix<float>& a, const Matrix<float>& b) {
  return std::sqrt(static_cast<double>((a - b).squaredNorm()) / static_cast<double>(a.size()));
}

ImageRegressor<float> fit(const std::vector<FaceParams>& faces, const Matrix<float>& targets, int out_dim,
                          const RegressorTraining& base, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageRegressor<float> model(kFaceShape.size(), base.hidden, out_dim, rng);
  RegressorTraining cfg = base;
  cfg.seed = seed + 1;
  train_regressor(model, render_batch(faces), targets, cfg);
  return model;
}

}  // namespace

CriticSet train_critics(const CriticTraining& cfg) {
  if (cfg.oracle_seed == cfg.direction_seed || cfg.oracle_seed == cfg.identity_seed)
    throw ConfigError("oracle and critics must be trained on disjoint seeds");
  CriticSet set;
  set.config = cfg;

  const auto oracle_faces = sample_faces(cfg.oracle_samples, cfg.oracle_seed);
  set.oracle = AttributeOracle(fit(oracle_faces, attribute_matrix(oracle_faces), kAttributeCount, cfg.regressor,
                                   cfg.oracle_seed));

  const auto dir_faces = sample_faces(cfg.critic_samples, cfg.direction_seed);
  set.direction.image =
      fit(dir_faces, direction_targets(dir_faces), TextLexicon::kDim, cfg.regressor, cfg.direction_seed);

  const auto id_faces = sample_faces(cfg.critic_samples, cfg.identity_seed);
  set.identity.image =
      fit(id_faces, identity_targets(id_faces), IdentityCritic<float>::kDim, cfg.regressor, cfg.identity_seed);

  // Held-out faces come from a seed none of the fits used.
  const auto held = sample_faces(1000, cfg.oracle_seed ^ 0x5eed5eedULL);
  const Matrix<float> imgs = render_batch(held);
  const Matrix<float> est = set.oracle.measure(imgs);
  const Matrix<float> truth = attribute_matrix(held);
  for (int a = 0; a < kAttributeCount; ++a)
    set.report.oracle_mae[static_cast<std::size_t>(a)] =
        static_cast<double>((est.row(a) - truth.row(a)).cwiseAbs().mean());
  set.report.direction_rmse = rmse(set.direction.embed_image(imgs), direction_targets(held));
  set.report.identity_rmse = rmse(set.identity.embed(imgs), identity_targets(held));
  return set;
}

void save_critics(const CriticSet& critics, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  critics.oracle.save(dir / "oracle.tensors");
  save_regressor(critics.direction.image, dir / "direction.tensors");
  save_regressor(critics.identity.image, dir / "identity.tensors");
  nlohmann::ordered_json m;
  m["format"] = "semedit.critics/1";
  m["oracle_seed"] = critics.config.oracle_seed;
  m["direction_seed"] = critics.config.direction_seed;
  m["identity_seed"] = critics.config.identity_seed;
  m["oracle_samples"] = critics.config.oracle_samples;
  m["critic_samples"] = critics.config.critic_samples;
  m["hidden"] = critics.config.regressor.hidden;
  m["epochs"] = critics.config.regressor.epochs;
  nlohmann::ordered_json mae;
  for (int a = 0; a < kAttributeCount; ++a)
    mae[kAttributeNames[static_cast<std::size_t>(a)]] = critics.report.oracle_mae[static_cast<std::size_t>(a)];
  m["oracle_mae"] = mae;
  m["direction_rmse"] = critics.report.direction_rmse;
  m["identity_rmse"] = critics.report.identity_rmse;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

CriticSet load_critics(const std::filesystem::path& dir) {
  CriticSet set;
  set.oracle = AttributeOracle::load(dir / "oracle.tensors");
  set.direction.image = load_regressor(dir / "direction.tensors");
  set.identity.image = load_regressor(dir / "identity.tensors");
  if (std::filesystem::exists(dir / "manifest.json")) {
    const auto m = nlohmann::json::parse(read_text(dir / "manifest.json"));
    set.config.oracle_seed = m.value("oracle_seed", set.config.oracle_seed);
    set.config.direction_seed = m.value("direction_seed", set.config.direction_seed);
    set.config.identity_seed = m.value("identity_seed", set.config.identity_seed);
    if (m.contains("oracle_mae"))
      for (int a = 0; a < kAttributeCount; ++a)
        set.report.oracle_mae[static_cast<std::size_t>(a)] =
            m["oracle_mae"].value(kAttributeNames[static_cast<std::size_t>(a)], 0.0);
    set.report.direction_rmse = m.value("direction_rmse", 0.0);
    set.report.identity_rmse = m.value("identity_rmse", 0.0);
  }
  return set;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, int line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("params table line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == '\t') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu.png", i);
  return buf;
}

}  // namespace

std::string params_table(const std::vector<FaceParams>& faces) {
  std::string out = "index";
  for (int k = 0; k < kIdentityDim; ++k) out += "\tid" + std::to_string(k);
  for (const char* name : kAttributeNames) out += std::string("\t") + name;
  out += "\n";
  for (std::size_t i = 0; i < faces.size(); ++i) {
    out += std::to_string(i);
    for (double v : faces[i].identity) out += "\t" + format_double(v);
    for (double v : faces[i].attributes) out += "\t" + format_double(v);
    out += "\n";
  }
  return out;
}

std::vector<FaceParams> parse_params_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("params table is empty");
  const std::size_t ncols = 1 + kIdentityDim + kAttributeCount;
  if (split_tabs(line).size() != ncols) throw IoError("params table header has the wrong column count");
  std::vector<FaceParams> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != ncols) throw IoError("params table line " + std::to_string(lineno) + ": wrong column count");
    FaceParams p;
    for (int k = 0; k < kIdentityDim; ++k)
      p.identity[static_cast<std::size_t>(k)] = parse_double(cols[static_cast<std::size_t>(1 + k)], lineno);
    for (int a = 0; a < kAttributeCount; ++a)
      p.attributes[static_cast<std::size_t>(a)] =
          parse_double(cols[static_cast<std::size_t>(1 + kIdentityDim + a)], lineno);
    if (!valid(p)) throw IoError("params table line " + std::to_string(lineno) + ": values out of range");
    out.push_back(p);
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<FaceParams>& faces, std::uint64_t seed) {
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < faces.size(); ++i) write_png(dir / "images" / image_name(i), render(faces[i]), kFaceShape);
  write_file(dir / "params.tsv", params_table(faces));
  nlohmann::ordered_json m;
  m["format"] = "semedit.dataset/1";
  m["seed"] = seed;
  m["n"] = faces.size();
  m["image_shape"] = {kFaceShape.height, kFaceShape.width, kFaceShape.channels};
  m["params"] = "params.tsv";
  m["images"] = "images/%05d.png";
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto m = nlohmann::json::parse(read_text(dir / "manifest.json"));
  Dataset ds;
  ds.seed = m.at("seed").get<std::uint64_t>();
  ds.faces = parse_params_table(read_text(dir / m.value("params", std::string("params.tsv"))));
  const auto n = m.at("n").get<std::size_t>();
  if (ds.faces.size() != n) throw IoError("dataset manifest n does not match params table");
  ds.images.resize(kFaceShape.size(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    ds.images.col(static_cast<Eigen::Index>(i)) = read_png(dir / "images" / image_name(i), kFaceShape);
  return ds;
}

}  // namespace semedit
