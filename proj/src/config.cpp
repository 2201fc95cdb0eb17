// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/config.hpp"

#include <set>

#include "semedit/image_io.hpp"

namespace semedit {

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + label() + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError("config: unknown key '" + key(k) + "'");
  }

  template <typename T>
  void get(const std::string& k, T& out) {
    used_.insert(k);
    if (!j_.contains(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: '" + key(k) + "' has the wrong type");
    }
  }

  void get(const std::string& k, SmsMode& out) {
    std::string s = to_string(out);
    get(k, s);
    try {
      out = parse_sms_mode(s);
    } catch (const Error& e) {
      throw ConfigError("config: '" + key(k) + "': " + e.what());
    }
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  Section sub(const std::string& k) {
    used_.insert(k);
    return Section(j_.at(k), key(k));
  }

 private:
  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_regressor(Section s, RegressorTraining& r) {
  s.get("hidden", r.hidden);
  s.get("epochs", r.epochs);
  s.get("batch", r.batch);
  s.get("lr", r.lr);
  s.get("input_noise", r.input_noise);
  s.get("seed", r.seed);
}

void read_objective(Section s, EditObjective& o) {
  s.get("y_ref", o.y_ref);
  s.get("strength", o.strength);
  s.get("sms", o.sms);
  s.get("squared_norm", o.squared_norm);
  s.get("direction_min_norm", o.direction_min_norm);
  if (s.has("weights")) {
    Section w = s.sub("weights");
    w.get("pre", o.weights.pre);
    w.get("id", o.weights.id);
    w.get("dir", o.weights.dir);
  }
}

void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  need(c.data.n > 0 && c.data.heldout > 0, "data.n and data.heldout must be positive");
  need(c.dae.d_z > 0 && c.dae.hidden > 0 && c.dae.blocks > 0, "dae sizes must be positive");
  need(c.dae.t_train >= 2, "dae.t_train must be at least 2");
  need(c.dae_training.iterations > 0 && c.dae_training.batch > 0, "dae_training.iterations and batch must be positive");
  need(c.dae_training.lr > 0.0, "dae_training.lr must be positive");
  need(c.dae_training.max_snr_weight >= 1.0, "dae_training.max_snr_weight must be >= 1");
  need(c.critics.oracle_samples > 0 && c.critics.critic_samples > 0, "critic sample counts must be positive");
  need(c.mapper.iterations > 0 && c.mapper.batch > 0 && c.mapper.lr > 0.0, "mapper iterations, batch and lr must be positive");
  need(c.mapper.t_sample >= 1 && c.mapper.t_sample <= c.dae.t_train, "mapper.t_sample must be in [1, dae.t_train]");
  need(c.mapper.objective.direction_min_norm >= 0.0, "mapper.objective.direction_min_norm must be >= 0");
  c.mapper.objective.weights.validate();
  need(c.eval.faces > 0, "eval.faces must be positive");
  need(c.eval.headroom >= 0.0 && c.eval.headroom < 1.0, "eval.headroom must be in [0, 1)");
  need(c.eval.t_sample >= 1 && c.eval.t_sample <= c.dae.t_train, "eval.t_sample must be in [1, dae.t_train]");
  need(!c.eval.strengths.empty() && !c.eval.steps.empty(), "eval.strengths and eval.steps must be non-empty");
  for (int t : c.eval.steps) need(t >= 1 && t <= c.dae.t_train, "eval.steps entries must be in [1, dae.t_train]");
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.dae.shape = kFaceShape;
  c.dae_training.iterations = 12000;
  c.dae_training.batch = 32;
  c.dae_training.lr = 1e-3;
  c.dae_training.max_snr_weight = 20.0;
  c.dae_training.log_every = 100;
  c.mapper.lr = 0.02;
  c.mapper.objective.direction_min_norm = 0.25;
  return c;
}

RunConfig overlay_run_config(RunConfig c, const nlohmann::json& j) {
  {
    Section root(j, "");
    if (root.has("data")) {
      Section s = root.sub("data");
      s.get("n", c.data.n);
      s.get("seed", c.data.seed);
      s.get("heldout", c.data.heldout);
      s.get("heldout_seed", c.data.heldout_seed);
    }
    if (root.has("dae")) {
      Section s = root.sub("dae");
      s.get("d_z", c.dae.d_z);
      s.get("encoder_hidden", c.dae.encoder_hidden);
      s.get("zero_encoder_output", c.dae.zero_encoder_output);
      s.get("hidden", c.dae.hidden);
      s.get("blocks", c.dae.blocks);
      s.get("cond_dim", c.dae.cond_dim);
      s.get("temb_dim", c.dae.temb_dim);
      s.get("t_train", c.dae.t_train);
      s.get("beta_start", c.dae.beta_start);
      s.get("beta_end", c.dae.beta_end);
      s.get("data_std", c.dae.data_std);
      s.get("init_seed", c.dae.init_seed);
    }
    if (root.has("dae_training")) {
      Section s = root.sub("dae_training");
      s.get("iterations", c.dae_training.iterations);
      s.get("batch", c.dae_training.batch);
      s.get("lr", c.dae_training.lr);
      s.get("lr_floor", c.dae_training.lr_floor);
      s.get("warmup", c.dae_training.warmup);
      s.get("grad_clip", c.dae_training.grad_clip);
      s.get("max_snr_weight", c.dae_training.max_snr_weight);
      s.get("seed", c.dae_training.seed);
      s.get("log_every", c.dae_training.log_every);
    }
    if (root.has("critics")) {
      Section s = root.sub("critics");
      s.get("oracle_samples", c.critics.oracle_samples);
      s.get("critic_samples", c.critics.critic_samples);
      s.get("oracle_seed", c.critics.oracle_seed);
      s.get("direction_seed", c.critics.direction_seed);
      s.get("identity_seed", c.critics.identity_seed);
      if (s.has("regressor")) read_regressor(s.sub("regressor"), c.critics.regressor);
    }
    if (root.has("mapper")) {
      Section s = root.sub("mapper");
      s.get("iterations", c.mapper.iterations);
      s.get("batch", c.mapper.batch);
      s.get("lr", c.mapper.lr);
      s.get("lr_floor", c.mapper.lr_floor);
      s.get("warmup", c.mapper.warmup);
      s.get("grad_clip", c.mapper.grad_clip);
      s.get("hidden", c.mapper.hidden);
      s.get("t_sample", c.mapper.t_sample);
      s.get("pool", c.mapper.pool);
      s.get("heldout", c.mapper.heldout);
      s.get("seed", c.mapper.seed);
      s.get("face_seed", c.mapper.face_seed);
      s.get("log_every", c.mapper.log_every);
      if (s.has("objective")) read_objective(s.sub("objective"), c.mapper.objective);
    }
    if (root.has("eval")) {
      Section s = root.sub("eval");
      s.get("faces", c.eval.faces);
      s.get("seed", c.eval.seed);
      s.get("headroom", c.eval.headroom);
      s.get("t_sample", c.eval.t_sample);
      s.get("strengths", c.eval.strengths);
      s.get("steps", c.eval.steps);
    }
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config: file not found: " + path.string());
  const auto j = nlohmann::json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: " + path.string() + " is not valid JSON");
  return overlay_run_config(default_run_config(), j);
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["data"] = {{"n", c.data.n}, {"seed", c.data.seed}, {"heldout", c.data.heldout}, {"heldout_seed", c.data.heldout_seed}};
  j["dae"] = {{"d_z", c.dae.d_z},           {"encoder_hidden", c.dae.encoder_hidden},
              {"zero_encoder_output", c.dae.zero_encoder_output},
              {"hidden", c.dae.hidden},     {"blocks", c.dae.blocks},
              {"cond_dim", c.dae.cond_dim}, {"temb_dim", c.dae.temb_dim},
              {"t_train", c.dae.t_train},   {"beta_start", c.dae.beta_start},
              {"beta_end", c.dae.beta_end}, {"data_std", c.dae.data_std},
              {"init_seed", c.dae.init_seed}};
  const DaeTraining& t = c.dae_training;
  j["dae_training"] = {{"iterations", t.iterations}, {"batch", t.batch},
                       {"lr", t.lr},                 {"lr_floor", t.lr_floor},
                       {"warmup", t.warmup},         {"grad_clip", t.grad_clip},
                       {"max_snr_weight", t.max_snr_weight},
                       {"seed", t.seed},             {"log_every", t.log_every}};
  const RegressorTraining& r = c.critics.regressor;
  j["critics"] = {{"oracle_samples", c.critics.oracle_samples},
                  {"critic_samples", c.critics.critic_samples},
                  {"oracle_seed", c.critics.oracle_seed},
                  {"direction_seed", c.critics.direction_seed},
                  {"identity_seed", c.critics.identity_seed},
                  {"regressor",
                   {{"hidden", r.hidden},
                    {"epochs", r.epochs},
                    {"batch", r.batch},
                    {"lr", r.lr},
                    {"input_noise", r.input_noise},
                    {"seed", r.seed}}}};
  const MapperTraining& m = c.mapper;
  const EditObjective& o = m.objective;
  j["mapper"] = {{"iterations", m.iterations},
                 {"batch", m.batch},
                 {"lr", m.lr},
                 {"lr_floor", m.lr_floor},
                 {"warmup", m.warmup},
                 {"grad_clip", m.grad_clip},
                 {"hidden", m.hidden},
                 {"t_sample", m.t_sample},
                 {"pool", m.pool},
                 {"heldout", m.heldout},
                 {"seed", m.seed},
                 {"face_seed", m.face_seed},
                 {"log_every", m.log_every},
                 {"objective",
                  {{"y_ref", o.y_ref},
                   {"strength", o.strength},
                   {"sms", to_string(o.sms)},
                   {"squared_norm", o.squared_norm},
                   {"direction_min_norm", o.direction_min_norm},
                   {"weights", {{"pre", o.weights.pre}, {"id", o.weights.id}, {"dir", o.weights.dir}}}}}};
  j["eval"] = {{"faces", c.eval.faces},       {"seed", c.eval.seed},           {"headroom", c.eval.headroom},
               {"t_sample", c.eval.t_sample}, {"strengths", c.eval.strengths}, {"steps", c.eval.steps}};
  return j;
}

}  // namespace semedit
