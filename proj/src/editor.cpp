// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/editor.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "semedit/log.hpp"
#include "semedit/tensor_io.hpp"

namespace semedit {

void LossWeights::validate() const {
  if (!(pre >= 0.0 && id >= 0.0 && dir >= 0.0)) throw ConfigError("loss weights must be nonnegative");
  if (pre == 0.0 && id == 0.0 && dir == 0.0) throw ConfigError("loss weights must not all be zero");
}

double clamp_strength(double s) {
  if (std::isnan(s)) {
    log::warn("edit strength is NaN; using 0");
    return 0.0;
  }
  if (s < 0.0 || s > 1.0) {
    const double c = std::clamp(s, 0.0, 1.0);
    log::warn("edit strength " + std::to_string(s) + " clamped to " + std::to_string(c));
    return c;
  }
  return s;
}

Matrix<float> apply_edit(const Matrix<float>& z, double s, AttributeMapper& m) {
  if (z.rows() != m.network.d_z()) throw ArgumentError("apply_edit: code length does not match the mapper");
  s = clamp_strength(s);
  if (s == 0.0) return z;
  return z + static_cast<float>(s) * m.network.delta(z);
}

Matrix<float> activate(const Matrix<float>& z0, const std::vector<EditDirective>& directives) {
  std::set<int> seen;
  for (const auto& d : directives) {
    if (!d.mapper) throw ArgumentError("activate: directive without a mapper");
    if (!seen.insert(d.mapper->mapper_id).second)
      throw ArgumentError("activate: mapper " + std::to_string(d.mapper->mapper_id) + " appears more than once");
    if (z0.rows() != d.mapper->network.d_z()) throw ArgumentError("activate: code length does not match a mapper");
  }
  // Summing in id order makes the result independent of the directive order.
  std::vector<const EditDirective*> order;
  for (const auto& d : directives) order.push_back(&d);
  std::sort(order.begin(), order.end(),
            [](const EditDirective* a, const EditDirective* b) { return a->mapper->mapper_id < b->mapper->mapper_id; });
  Matrix<float> z = z0;
  for (const EditDirective* dp : order) {
    const EditDirective& d = *dp;
    const double s = clamp_strength(d.strength);
    if (s == 0.0) continue;
    z += static_cast<float>(s) * d.mapper->network.delta(z0);
  }
  return z;
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  const double v = w.pre * c.pre + w.id * c.id + w.dir * c.dir;
  if (!std::isfinite(v)) throw NumericError("total_loss: non-finite component");
  return v;
}

double loss_pre(const Vector<double>& x0, const Vector<double>& decoded, const Vector<double>& dz, bool squared) {
  Tape<double> tape;
  const Matrix<double> a = x0, b = decoded, d = dz;
  return loss_pre(tape.constant(a), tape.constant(b), tape.constant(d), squared).value()(0, 0);
}

double loss_id(const Vector<double>& emb_a, const Vector<double>& emb_b) {
  Tape<double> tape;
  const Matrix<double> a = emb_a, b = emb_b;
  return loss_id(tape.constant(a), tape.constant(b)).value()(0, 0);
}

double loss_direction(const Vector<double>& d_image, const Vector<double>& d_text) {
  Tape<double> tape;
  const Matrix<double> a = d_image;
  return loss_direction(tape.constant(a), d_text).value()(0, 0);
}

// ---------------------------------------------------------------------------

EditBatch<float> prepare_batch(DiffusionAutoencoder<float>& model, const Matrix<float>& images,
                               DirectionCritic<float>& dcrit, IdentityCritic<float>& icrit, const StepGrid& grid) {
  EditBatch<float> b;
  b.x0 = images;
  const auto lat = encode_latents(model, images, grid);
  b.z0 = lat.z;
  b.x_T = lat.x_T;
  const Matrix<float> rec = generate(lat.x_T, constant_trajectory(lat.z, grid), grid, model.eps_fn(), model.schedule);
  b.ref_dir = dcrit.embed_image(rec);
  b.ref_id = icrit.embed(rec);
  return b;
}

namespace {

EditBatch<float> select(const EditBatch<float>& pool, const std::vector<Eigen::Index>& idx) {
  EditBatch<float> b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.x0.resize(pool.x0.rows(), n);
  b.z0.resize(pool.z0.rows(), n);
  b.x_T.resize(pool.x_T.rows(), n);
  b.ref_dir.resize(pool.ref_dir.rows(), n);
  b.ref_id.resize(pool.ref_id.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index k = idx[static_cast<std::size_t>(j)];
    b.x0.col(j) = pool.x0.col(k);
    b.z0.col(j) = pool.z0.col(k);
    b.x_T.col(j) = pool.x_T.col(k);
    b.ref_dir.col(j) = pool.ref_dir.col(k);
    b.ref_id.col(j) = pool.ref_id.col(k);
  }
  return b;
}

Matrix<float> quantized_renders(const std::vector<FaceParams>& faces) {
  Matrix<float> imgs = render_batch(faces);
  for (Eigen::Index j = 0; j < imgs.cols(); ++j) imgs.col(j) = quantize_u8(imgs.col(j));
  return imgs;
}

}  // namespace

AttributeMapper train_mapper(const DaeCheckpoint& ckpt, CriticSet& critics, const MapperTraining& cfg) {
  if (!critics.direction.differentiable)
    throw ConfigError("train_mapper: the direction critic is not differentiable with respect to images");
  cfg.objective.weights.validate();
  if (cfg.iterations < 1 || cfg.batch < 1 || cfg.pool < cfg.batch)
    throw ConfigError("train_mapper: need iterations >= 1 and pool >= batch >= 1");
  if (!critics.direction.text.contains(cfg.objective.y_tar) || !critics.direction.text.contains(cfg.objective.y_ref))
    throw ConfigError("train_mapper: prompt pair '" + cfg.objective.y_tar + "' / '" + cfg.objective.y_ref +
                      "' is not in the critic lexicon");

  DiffusionAutoencoder<float> model = ckpt.model;
  model.set_trainable(false);
  const StepGrid grid = make_grid(cfg.t_sample, model.config.t_train);

  const EditBatch<float> pool = prepare_batch(model, quantized_renders(sample_faces(cfg.pool, cfg.face_seed)),
                                              critics.direction, critics.identity, grid);
  const EditBatch<float> held = prepare_batch(model, quantized_renders(sample_faces(cfg.heldout, cfg.face_seed + 1)),
                                              critics.direction, critics.identity, grid);

  AttributeMapper out;
  out.mapper_id = cfg.mapper_id;
  out.name = cfg.name.empty() ? cfg.objective.y_tar : cfg.name;
  out.aliases = cfg.aliases.empty() ? std::vector<std::string>{out.name} : cfg.aliases;
  std::mt19937_64 rng(cfg.seed);
  out.network = MapperNetwork<float>(model.config.d_z, cfg.hidden > 0 ? cfg.hidden : model.config.d_z, rng);
  MapperMeta& meta = out.meta;
  meta.y_tar = cfg.objective.y_tar;
  meta.y_ref = cfg.objective.y_ref;
  meta.weights = cfg.objective.weights;
  meta.seed = cfg.seed;
  meta.iterations = cfg.iterations;
  meta.batch = cfg.batch;
  meta.lr = cfg.lr;
  meta.t_sample = cfg.t_sample;
  meta.sms = cfg.objective.sms;
  meta.squared_norm = cfg.objective.squared_norm;
  meta.direction_min_norm = cfg.objective.direction_min_norm;

  auto eval_held = [&]() {
    Tape<float> tape;
    return static_cast<double>(
        edit_forward(tape, model, out.network, held, critics.direction, critics.identity, grid, cfg.objective)
            .total.value()(0, 0));
  };
  meta.heldout_initial = eval_held();

  nn::Adam<float> opt(out.network.params(), {.lr = cfg.lr, .grad_clip = cfg.grad_clip});
  std::vector<Eigen::Index> order(static_cast<std::size_t>(cfg.pool));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  double window = 0.0;
  long window_n = 0;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(cfg.batch));
  for (long it = 0; it < cfg.iterations; ++it) {
    for (auto& k : idx) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      k = order[cursor++];
    }
    const EditBatch<float> b = select(pool, idx);
    Tape<float> tape;
    const auto f = edit_forward(tape, model, out.network, b, critics.direction, critics.identity, grid, cfg.objective);
    const double lv = static_cast<double>(f.total.value()(0, 0));
    if (!std::isfinite(lv)) throw TrainingError("mapper loss is not finite", it);
    if (it == 0) meta.initial_loss = lv;
    opt.zero_grad();
    tape.backward(f.total);
    opt.step(nn::cosine_lr(cfg.lr, it, cfg.iterations, cfg.warmup, cfg.lr_floor));
    window += lv;
    ++window_n;
    if ((it + 1) % std::max(1, cfg.log_every) == 0 || it + 1 == cfg.iterations) {
      meta.loss_series.emplace_back(it + 1, window / static_cast<double>(window_n));
      meta.final_loss = window / static_cast<double>(window_n);
      window = 0.0;
      window_n = 0;
    }
  }
  meta.heldout_final = eval_held();
  return out;
}

// ---------------------------------------------------------------------------

std::string mapper_manifest(const AttributeMapper& m) {
  nlohmann::ordered_json j;
  j["format"] = "semedit.mapper/1";
  j["mapper_id"] = m.mapper_id;
  j["name"] = m.name;
  j["aliases"] = m.aliases;
  j["architecture"] = {{"layers", 4}, {"d_z", m.network.d_z()}, {"hidden", m.network.net.layers.front().out()},
                       {"activation", "leaky_relu"}};
  const MapperMeta& t = m.meta;
  j["prompt"] = {{"y_tar", t.y_tar}, {"y_ref", t.y_ref}};
  j["weights"] = {{"pre", t.weights.pre}, {"id", t.weights.id}, {"dir", t.weights.dir}};
  j["training"] = {
      {"seed", t.seed},
      {"iterations", t.iterations},
      {"batch", t.batch},
      {"lr", t.lr},
      {"optimizer", t.optimizer},
      {"t_sample", t.t_sample},
      {"sms", to_string(t.sms)},
      {"squared_norm", t.squared_norm},
      {"direction_min_norm", t.direction_min_norm},
      {"initial_loss", t.initial_loss},
      {"final_loss", t.final_loss},
      {"heldout_initial", t.heldout_initial},
      {"heldout_final", t.heldout_final},
  };
  j["tensors"] = "mapper.tensors";
  j["loss_series"] = "loss.tsv";
  return j.dump(2) + "\n";
}

void save_mapper(const AttributeMapper& m_in, const std::filesystem::path& dir) {
  auto& m = const_cast<AttributeMapper&>(m_in);
  std::filesystem::create_directories(dir);
  TensorContainer c;
  c.put_params(m.network.params());
  c.save(dir / "mapper.tensors");
  std::ostringstream series;
  series << "iteration\tloss\n";
  for (const auto& [it, loss] : m.meta.loss_series) series << it << '\t' << loss << '\n';
  write_file(dir / "loss.tsv", series.str());
  write_file(dir / "manifest.json", mapper_manifest(m));
}

AttributeMapper load_mapper(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) throw IoError("no mapper manifest in " + dir.string());
  const auto j = nlohmann::json::parse(read_text(dir / "manifest.json"));
  if (j.value("format", std::string()) != "semedit.mapper/1") throw IoError("unsupported mapper format");
  AttributeMapper m;
  m.mapper_id = j.at("mapper_id").get<int>();
  m.name = j.at("name").get<std::string>();
  m.aliases = j.at("aliases").get<std::vector<std::string>>();
  const auto& a = j.at("architecture");
  std::mt19937_64 rng(0);
  m.network = MapperNetwork<float>(a.at("d_z").get<int>(), a.at("hidden").get<int>(), rng);
  auto params = m.network.params();
  TensorContainer::load(dir / "mapper.tensors").get_params(params);
  m.meta.y_tar = j.at("prompt").value("y_tar", std::string());
  m.meta.y_ref = j.at("prompt").value("y_ref", std::string("face"));
  const auto& w = j.at("weights");
  m.meta.weights = {w.value("pre", 0.2), w.value("id", 0.5), w.value("dir", 2.0)};
  const auto& t = j.at("training");
  m.meta.seed = t.value("seed", std::uint64_t{0});
  m.meta.iterations = t.value("iterations", 0L);
  m.meta.batch = t.value("batch", 0);
  m.meta.lr = t.value("lr", 0.0);
  m.meta.optimizer = t.value("optimizer", std::string("adam"));
  m.meta.t_sample = t.value("t_sample", 8);
  m.meta.sms = parse_sms_mode(t.value("sms", std::string("on")));
  m.meta.squared_norm = t.value("squared_norm", false);
  m.meta.direction_min_norm = t.value("direction_min_norm", 0.0);
  m.meta.initial_loss = t.value("initial_loss", 0.0);
  m.meta.final_loss = t.value("final_loss", 0.0);
  m.meta.heldout_initial = t.value("heldout_initial", 0.0);
  m.meta.heldout_final = t.value("heldout_final", 0.0);
  return m;
}

}  // namespace semedit
