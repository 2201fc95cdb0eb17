// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/service.hpp"

#include <chrono>
#include <ctime>
#include <random>
#include <regex>

#include "httplib.h"
#include "semedit/image_io.hpp"
#include "semedit/log.hpp"
#include "semedit/tensor_io.hpp"

namespace semedit {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct EditService::Turn {
  ojson record;
  EditPlan plan;
};

struct EditService::Session {
  std::mutex mutex;
  std::string id;
  std::string created;
  std::optional<std::string> source, preview;
  Matrix<float> z0;
  std::map<int, Matrix<float>> x_T;  // keyed by step count
  EditPlan active;                   // the composed directive set
  std::vector<Turn> turns;
  bool has_image() const { return z0.size() > 0; }
};

namespace {

const std::regex& id_pattern() {
  static const std::regex r("[0-9a-f]{16}");
  return r;
}

const std::regex& ref_pattern() {
  static const std::regex r("[0-9a-f]{16}\\.png");
  return r;
}

std::string random_hex() {
  static std::mutex m;
  static std::mt19937_64 rng{std::random_device{}() ^
                             static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count())};
  std::lock_guard lock(m);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ojson opt(const std::optional<std::string>& v) { return v ? ojson(*v) : ojson(nullptr); }

int plan_steps(const EditPlan& plan, int fallback) {
  int t = 0;
  for (const auto& task : plan) t = std::max(t, task.time_steps);
  return t > 0 ? t : fallback;
}

// Active set with `update` merged in: same mapper id replaces, new ids append.
EditPlan merge(EditPlan active, const EditPlan& update) {
  for (const auto& t : update) {
    auto it = std::find_if(active.begin(), active.end(), [&](const EditTask& a) { return a.mapper_id == t.mapper_id; });
    if (it != active.end()) {
      *it = t;
    } else {
      active.push_back(t);
    }
  }
  return active;
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& detail, int step = -1) {
  ojson j;
  j["error"] = code;
  j["detail"] = detail;
  if (step >= 0) j["step"] = step;
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    send_error(res, e.status(), e.code(), e.what(), e.step());
  } catch (const NumericError& e) {
    send_error(res, 500, "generation_failed", e.what(), e.step());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

}  // namespace

EditService::EditService(DaeCheckpoint checkpoint, MapperRegistry registry, std::map<int, AttributeMapper> mappers,
                         std::optional<CriticSet> critics, ServiceOptions options,
                         std::unique_ptr<ChatCompletionClient> llm)
    : checkpoint_(std::move(checkpoint)),
      registry_(std::move(registry)),
      mappers_(std::move(mappers)),
      critics_(std::move(critics)),
      options_(std::move(options)),
      llm_(std::move(llm)),
      lexicon_(StrengthLexicon::defaults()) {
  if (options_.root.empty()) throw ConfigError("service: root directory is required");
  if (options_.preview_steps < kMinTimeSteps || options_.preview_steps > kMaxTimeSteps)
    throw ConfigError("service: preview steps must be in [8, 50]");
  for (auto& [id, m] : mappers_) {
    if (!registry_.contains(id)) throw ConfigError("service: mapper " + std::to_string(id) + " is not in the registry");
    if (m.network.d_z() != checkpoint_.model.config.d_z)
      throw ConfigError("service: mapper " + std::to_string(id) + " code length does not match the checkpoint");
    m.mapper_id = id;
  }
  if (options_.backend == ParserBackend::llm && !llm_)
    log::warn("service: llm backend selected without an endpoint; every parse falls back to rules");
  fs::create_directories(options_.root / "sessions");
  fs::create_directories(options_.root / "artifacts");
}

EditService::~EditService() { stop(); }

std::unique_ptr<EditService> EditService::open(const ServiceConfig& cfg, std::unique_ptr<ChatCompletionClient> llm) {
  DaeCheckpoint ckpt = load_checkpoint(cfg.checkpoint);
  MapperRegistry reg = MapperRegistry::load(cfg.registry);
  std::map<int, AttributeMapper> mappers;
  const fs::path base = cfg.registry.parent_path();
  for (const auto& e : reg.entries()) {
    const fs::path dir = base / e.artifact;
    if (e.artifact.empty() || !fs::exists(dir / "manifest.json")) {
      log::warn("service: no mapper artifact for '" + e.name + "' at " + dir.string());
      continue;
    }
    mappers.emplace(e.id, load_mapper(dir));
  }
  std::optional<CriticSet> critics;
  if (!cfg.critics.empty()) critics = load_critics(cfg.critics);
  if (cfg.options.backend == ParserBackend::llm && !llm) llm = HttpChatClient::from_env();
  return std::make_unique<EditService>(std::move(ckpt), std::move(reg), std::move(mappers), std::move(critics),
                                       cfg.options, std::move(llm));
}

// ---------------------------------------------------------------------------
// Persistence

void EditService::persist(const Session& s) const {
  const fs::path dir = options_.root / "sessions" / s.id;
  fs::create_directories(dir);
  ojson j;
  j["session_id"] = s.id;
  j["created"] = s.created;
  j["source"] = opt(s.source);
  j["preview"] = opt(s.preview);
  j["active"] = plan_to_json(s.active);
  j["turns"] = ojson::array();
  for (const auto& t : s.turns) j["turns"].push_back(t.record);
  write_file(dir / "session.json", j.dump(2) + "\n");
  if (s.has_image()) {
    TensorContainer c;
    c.put_matrix("z0", s.z0);
    for (const auto& [steps, xt] : s.x_T) c.put_matrix("x_T." + std::to_string(steps), xt);
    c.save(dir / "latents.tensors");
  }
}

std::shared_ptr<EditService::Session> EditService::find(const std::string& session_id) {
  if (!std::regex_match(session_id, id_pattern())) throw ServiceError(404, "not_found", "unknown session " + session_id);
  std::lock_guard lock(sessions_mutex_);
  if (auto it = sessions_.find(session_id); it != sessions_.end()) return it->second;
  const fs::path dir = options_.root / "sessions" / session_id;
  if (!fs::exists(dir / "session.json")) throw ServiceError(404, "not_found", "unknown session " + session_id);

  auto s = std::make_shared<Session>();
  const auto j = ojson::parse(read_text(dir / "session.json"));
  auto plan_of = [&](const ojson& p) { return plan_from_json(nlohmann::json::parse(p.dump()), registry_, nullptr); };
  s->id = session_id;
  s->created = j.value("created", std::string());
  if (j.contains("source") && j["source"].is_string()) s->source = j["source"].get<std::string>();
  if (j.contains("preview") && j["preview"].is_string()) s->preview = j["preview"].get<std::string>();
  s->active = plan_of(j.value("active", ojson::array()));
  for (const auto& t : j.value("turns", ojson::array())) {
    Turn turn;
    turn.record = t;
    turn.plan = plan_of(t.value("plan", ojson::array()));
    s->turns.push_back(std::move(turn));
  }
  if (fs::exists(dir / "latents.tensors")) {
    const TensorContainer c = TensorContainer::load(dir / "latents.tensors");
    s->z0 = c.get_matrix<float>("z0");
    for (const auto& name : c.names())
      if (name.rfind("x_T.", 0) == 0) s->x_T[std::stoi(name.substr(4))] = c.get_matrix<float>(name);
  }
  sessions_.emplace(session_id, s);
  return s;
}

std::string EditService::store_png(const Vector<float>& image) {
  const std::string ref = random_hex() + ".png";
  write_file(options_.root / "artifacts" / ref, encode_png(image, checkpoint_.model.config.shape));
  return ref;
}

std::vector<std::uint8_t> EditService::artifact(const std::string& ref) const {
  const fs::path p = options_.root / "artifacts" / ref;
  if (!std::regex_match(ref, ref_pattern()) || !fs::exists(p)) throw ServiceError(404, "not_found", "unknown artifact " + ref);
  const std::string bytes = read_text(p);
  return {bytes.begin(), bytes.end()};
}

// ---------------------------------------------------------------------------
// Operations

std::string EditService::create_session() {
  auto s = std::make_shared<Session>();
  s->created = utc_now();
  {
    std::lock_guard lock(sessions_mutex_);
    do {
      s->id = random_hex();
    } while (sessions_.count(s->id) || fs::exists(options_.root / "sessions" / s->id));
    sessions_.emplace(s->id, s);
  }
  try {
    persist(*s);
  } catch (const std::exception& e) {
    throw ServiceError(500, "storage_failed", e.what());
  }
  return s->id;
}

const Matrix<float>& EditService::stochastic_code(Session& s, int steps) {
  if (auto it = s.x_T.find(steps); it != s.x_T.end()) return it->second;
  const Vector<float> image = decode_png(std::vector<std::uint8_t>(artifact(*s.source)), checkpoint_.model.config.shape);
  std::lock_guard lock(compute_mutex_);
  const auto lat = encode_latents(checkpoint_.model, Matrix<float>(image), make_grid(steps, checkpoint_.model.config.t_train));
  return s.x_T[steps] = lat.x_T;
}

Matrix<float> EditService::decode(Session& s, const EditPlan& active, int steps) {
  const Matrix<float>& x_T = stochastic_code(s, steps);
  std::vector<EditDirective> directives;
  for (const auto& t : active) {
    auto it = mappers_.find(t.mapper_id);
    if (it == mappers_.end())
      throw ServiceError(409, "mapper_unavailable", "no trained mapper for '" + t.task + "'");
    directives.push_back({&it->second, t.strength});
  }
  std::lock_guard lock(compute_mutex_);
  const Matrix<float> z_edit = activate(s.z0, directives);
  Matrix<float> out = decode_edit(checkpoint_.model, x_T, s.z0, z_edit, make_grid(steps, checkpoint_.model.config.t_train),
                                  options_.sms);
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = quantize_u8(out.col(j));
  return out;
}

nlohmann::ordered_json EditService::attach_image(const std::string& session_id, const std::vector<std::uint8_t>& png) {
  auto s = find(session_id);
  Vector<float> image;
  try {
    image = decode_png(png, checkpoint_.model.config.shape);
  } catch (const std::exception& e) {
    throw ServiceError(400, "bad_image", e.what());
  }
  std::lock_guard session_lock(s->mutex);
  s->source = store_png(image);
  s->x_T.clear();
  {
    std::lock_guard lock(compute_mutex_);
    s->z0 = checkpoint_.model.encode(Matrix<float>(image));
  }
  const Matrix<float> recon = decode(*s, {}, options_.preview_steps);
  s->preview = store_png(recon.col(0));
  persist(*s);
  ojson r;
  r["session_id"] = s->id;
  r["source"] = *s->source;
  r["preview"] = *s->preview;
  r["steps"] = options_.preview_steps;
  r["reconstruction_l1"] = relative_l1(recon, Matrix<float>(image));
  return r;
}

nlohmann::ordered_json EditService::run_turn(Session& s, const std::string& text, ParseResult parsed, EditPlan active) {
  ojson rec;
  rec["turn"] = static_cast<int>(s.turns.size()) + 1;
  rec["utterance"] = text;
  rec["provenance"] = to_string(parsed.provenance);
  rec["plan"] = plan_to_json(parsed.tasks);
  rec["warnings"] = parsed.warnings;
  rec["image"] = nullptr;
  rec["metrics"] = nullptr;

  if (!parsed.tasks.empty()) {
    const int steps = plan_steps(active, options_.preview_steps);
    Matrix<float> edited;
    try {
      edited = decode(s, active, steps);
    } catch (const NumericError& e) {
      throw ServiceError(500, "generation_failed", e.what(), e.step());
    }
    rec["applied"] = plan_to_json(active);
    rec["steps"] = steps;
    rec["image"] = store_png(edited.col(0));
    if (critics_) {
      const Matrix<float> reference = decode(s, {}, steps);
      std::lock_guard lock(compute_mutex_);
      const Matrix<float> a0 = critics_->oracle.measure(reference), a1 = critics_->oracle.measure(edited);
      ojson deltas;
      for (int a = 0; a < kAttributeCount; ++a)
        deltas[kAttributeNames[static_cast<std::size_t>(a)]] = static_cast<double>(a1(a, 0) - a0(a, 0));
      const Matrix<float> e0 = critics_->identity.embed(reference), e1 = critics_->identity.embed(edited);
      ojson m;
      m["oracle_delta"] = deltas;
      m["identity"] = static_cast<double>(e0.col(0).dot(e1.col(0)) / (e0.col(0).norm() * e1.col(0).norm()));
      rec["metrics"] = m;
    }
    s.active = std::move(active);
  }
  rec["reply"] = compose_reply(parsed);

  Turn t;
  t.record = rec;
  t.plan = parsed.tasks;
  s.turns.push_back(std::move(t));
  persist(s);
  ojson out = rec;
  out["session_id"] = s.id;
  return out;
}

nlohmann::ordered_json EditService::chat(const std::string& session_id, const std::string& text) {
  auto s = find(session_id);
  if (normalize(text).empty()) throw ServiceError(400, "empty_utterance", "chat text is empty");
  std::lock_guard session_lock(s->mutex);
  if (!s->has_image()) throw ServiceError(409, "no_image", "attach an image before chatting");

  ParseResult parsed = options_.backend == ParserBackend::llm && llm_ ? parse_llm(text, registry_, *llm_, lexicon_)
                                                                      : parse_rule(text, registry_, lexicon_);
  if (parsed.tasks.empty()) {
    const EditPlan* last = nullptr;
    for (auto it = s->turns.rbegin(); it != s->turns.rend() && !last; ++it)
      if (!it->plan.empty()) last = &it->plan;
    if (last) {
      if (auto refined = refine_plan(text, *last, lexicon_)) {
        parsed.tasks = std::move(*refined);
        parsed.provenance = Provenance::replay;
        parsed.message.clear();
      }
    }
  }
  EditPlan active = merge(s->active, parsed.tasks);
  return run_turn(*s, text, std::move(parsed), std::move(active));
}

nlohmann::ordered_json EditService::chat_plan(const std::string& session_id, const nlohmann::json& plan,
                                              const std::string& text) {
  auto s = find(session_id);
  ParseResult parsed;
  parsed.provenance = Provenance::plan;
  try {
    parsed.tasks = plan_from_json(plan, registry_, &parsed.warnings);
  } catch (const Error& e) {
    throw ServiceError(400, "bad_plan", e.what());
  }
  std::lock_guard session_lock(s->mutex);
  if (!s->has_image()) throw ServiceError(409, "no_image", "attach an image before chatting");
  EditPlan active = parsed.tasks;
  return run_turn(*s, text, std::move(parsed), std::move(active));
}

nlohmann::ordered_json EditService::history(const std::string& session_id) {
  auto s = find(session_id);
  std::lock_guard session_lock(s->mutex);
  ojson j;
  j["session_id"] = s->id;
  j["created"] = s->created;
  j["source"] = opt(s->source);
  j["preview"] = opt(s->preview);
  j["active"] = plan_to_json(s->active);
  j["turns"] = ojson::array();
  for (const auto& t : s->turns) j["turns"].push_back(t.record);
  return j;
}

nlohmann::ordered_json EditService::list_mappers() const {
  ojson arr = ojson::array();
  for (const auto& e : registry_.entries()) {
    ojson m;
    m["id"] = e.id;
    m["name"] = e.name;
    m["aliases"] = e.aliases;
    m["available"] = mappers_.count(e.id) != 0;
    arr.push_back(std::move(m));
  }
  ojson j;
  j["mappers"] = arr;
  return j;
}

// ---------------------------------------------------------------------------
// HTTP

void EditService::mount(httplib::Server& server) {
  auto json_reply = [](httplib::Response& res, const ojson& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  };
  server.Post("/sessions", [this, json_reply](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      ojson j;
      j["session_id"] = create_session();
      json_reply(res, j, 201);
    });
  });
  server.Post(R"(/sessions/([^/]+)/image)", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::string body = req.body;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("image")) throw ServiceError(400, "bad_image", "multipart body lacks an 'image' part");
        body = req.get_file_value("image").content;
      }
      json_reply(res, attach_image(req.matches[1], std::vector<std::uint8_t>(body.begin(), body.end())));
    });
  });
  server.Post(R"(/sessions/([^/]+)/chat)", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object())
        throw ServiceError(400, "bad_request", "chat body must be a JSON object");
      const std::string text = body.contains("text") && body["text"].is_string() ? body["text"].get<std::string>() : "";
      if (body.contains("plan")) {
        json_reply(res, chat_plan(req.matches[1], body["plan"], text));
      } else if (body.contains("text") && body["text"].is_string()) {
        json_reply(res, chat(req.matches[1], text));
      } else {
        throw ServiceError(400, "bad_request", "chat body needs \"text\" or \"plan\"");
      }
    });
  });
  server.Get(R"(/sessions/([^/]+)/history)", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { json_reply(res, history(req.matches[1])); });
  });
  server.Get("/mappers", [this, json_reply](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { json_reply(res, list_mappers()); });
  });
  server.Get(R"(/artifacts/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto bytes = artifact(req.matches[1]);
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    });
  });
}

void EditService::serve(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  mount(*server_);
  log::info("serving on http://" + host + ":" + std::to_string(port));
  if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void EditService::stop() {
  if (server_) server_->stop();
}

}  // namespace semedit
