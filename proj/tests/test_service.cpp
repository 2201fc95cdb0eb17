// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <random>
#include <thread>

#include "doctest.h"
#include "semedit/image_io.hpp"
#include "semedit/log.hpp"
#include "semedit/service.hpp"
// After Eigen: resolv.h defines a _res macro.
#include "httplib.h"

using namespace semedit;
namespace fs = std::filesystem;

namespace {

DaeCheckpoint micro_checkpoint() {
  DaeConfig cfg;
  cfg.shape = kFaceShape;
  cfg.d_z = 8;
  cfg.encoder_hidden = {32};
  cfg.hidden = 32;
  cfg.blocks = 1;
  cfg.cond_dim = 16;
  cfg.temb_dim = 8;
  cfg.init_seed = 5;
  DaeCheckpoint c;
  c.model = DiffusionAutoencoder<float>(cfg);
  return c;
}

AttributeMapper random_mapper(int id, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AttributeMapper m;
  m.mapper_id = id;
  m.name = MapperRegistry::defaults().at(id).name;
  m.network = MapperNetwork<float>(8, 16, rng);
  std::normal_distribution<float> n(0.0f, 0.5f);
  for (auto& [name, p] : m.network.params())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = n(rng);
  return m;
}

std::map<int, AttributeMapper> mappers() {
  std::map<int, AttributeMapper> out;
  out.emplace(0, random_mapper(0, 11));
  out.emplace(2, random_mapper(2, 12));
  return out;
}

std::unique_ptr<EditService> make_service(const fs::path& root, std::optional<CriticSet> critics = std::nullopt) {
  ServiceOptions opt;
  opt.root = root;
  return std::make_unique<EditService>(micro_checkpoint(), MapperRegistry::defaults(), mappers(), std::move(critics),
                                       opt);
}

std::vector<std::uint8_t> face_png(std::uint64_t seed) {
  return encode_png(render(sample_faces(1, seed)[0]), kFaceShape);
}

struct TempRoot {
  fs::path path;
  TempRoot() {
    path = fs::temp_directory_path() / ("semedit_service_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
  }
  ~TempRoot() { fs::remove_all(path); }
};

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 0;
}

}  // namespace

TEST_CASE("service: multi-turn chat composes and refines") {
  log::set_level(log::Level::error);
  TempRoot root;
  auto svc = make_service(root.path);
  const std::string id = svc->create_session();
  const auto attached = svc->attach_image(id, face_png(1));
  CHECK(attached["preview"].is_string());
  CHECK(attached["reconstruction_l1"].get<double>() >= 0.0);

  const auto t1 = svc->chat(id, "add a smile");
  CHECK(t1["provenance"] == "rule");
  REQUIRE(t1["applied"].size() == 1);
  CHECK(t1["applied"][0]["args"]["strength"].get<double>() == doctest::Approx(0.5));
  CHECK(t1["image"].is_string());
  CHECK(t1["image"] != attached["preview"]);

  const auto t2 = svc->chat(id, "make it stronger");
  CHECK(t2["provenance"] == "replay");
  REQUIRE(t2["applied"].size() == 1);
  CHECK(t2["applied"][0]["args"]["strength"].get<double>() == doctest::Approx(0.9));

  const auto t3 = svc->chat(id, "also a bit pale");
  REQUIRE(t3["applied"].size() == 2);
  CHECK(t3["applied"][0]["task"] == "smile");
  CHECK(t3["applied"][1]["task"] == "pale");
  CHECK(t3["applied"][1]["args"]["strength"].get<double>() == doctest::Approx(0.2));

  const auto t4 = svc->chat(id, "hello there");
  CHECK(t4["image"].is_null());
  CHECK(t4["reply"].get<std::string>().find("could not find") != std::string::npos);

  const auto h = svc->history(id);
  CHECK(h["turns"].size() == 4);
  CHECK(h["active"].size() == 2);
}

TEST_CASE("service: zero-strength plan reproduces the reconstruction bitwise") {
  log::set_level(log::Level::error);
  TempRoot root;
  auto svc = make_service(root.path);
  const std::string id = svc->create_session();
  const auto attached = svc->attach_image(id, face_png(2));
  const auto plan = nlohmann::json::parse(
      R"([{"task":"smile","id":0,"args":{"attribute":"smile","strength":0.0,"time_steps":8}},
          {"task":"pale","id":2,"args":{"attribute":"pale","strength":0.0,"time_steps":8}}])");
  const auto turn = svc->chat_plan(id, plan);
  CHECK(turn["provenance"] == "plan");
  CHECK(svc->artifact(turn["image"]) == svc->artifact(attached["preview"]));
}

TEST_CASE("service: structured plan replaces the active set") {
  log::set_level(log::Level::error);
  TempRoot root;
  auto svc = make_service(root.path);
  const std::string id = svc->create_session();
  svc->attach_image(id, face_png(3));
  svc->chat(id, "smile and pale");
  const auto turn = svc->chat_plan(
      id, nlohmann::json::parse(R"([{"task":"pale","id":2,"args":{"attribute":"pale","strength":1.5,"time_steps":20}}])"));
  REQUIRE(turn["applied"].size() == 1);
  CHECK(turn["applied"][0]["args"]["strength"].get<double>() == 1.0);
  CHECK(turn["steps"] == 20);
  CHECK_FALSE(turn["warnings"].empty());
}

TEST_CASE("service: sessions survive a restart") {
  log::set_level(log::Level::error);
  TempRoot root;
  std::string id, image;
  nlohmann::ordered_json before;
  {
    auto svc = make_service(root.path);
    id = svc->create_session();
    svc->attach_image(id, face_png(4));
    image = svc->chat(id, "very happy")["image"];
    before = svc->history(id);
  }
  auto svc = make_service(root.path);
  CHECK(svc->history(id) == before);
  const auto again = svc->chat_plan(id, nlohmann::json::parse(R"([{"task":"smile","id":0,"args":{"strength":0.9}}])"));
  CHECK(svc->artifact(again["image"]) == svc->artifact(image));
  const auto refined = svc->chat(id, "weaker");
  CHECK(refined["provenance"] == "replay");
  CHECK(refined["applied"][0]["args"]["strength"].get<double>() == doctest::Approx(0.5));
}

TEST_CASE("service: direct errors carry status codes") {
  log::set_level(log::Level::error);
  TempRoot root;
  auto svc = make_service(root.path);
  CHECK(status_of([&] { svc->history("0123456789abcdef"); }) == 404);
  CHECK(status_of([&] { svc->history("../../etc"); }) == 404);
  CHECK(status_of([&] { svc->artifact("../sessions.png"); }) == 404);
  const std::string id = svc->create_session();
  CHECK(status_of([&] { svc->chat(id, "smile"); }) == 409);
  CHECK(status_of([&] { svc->attach_image(id, {1, 2, 3}); }) == 400);
  svc->attach_image(id, face_png(5));
  CHECK(status_of([&] { svc->chat(id, "  ?! "); }) == 400);
  CHECK(status_of([&] { svc->chat(id, "curly hair"); }) == 409);  // registered, no artifact
  CHECK(status_of([&] { svc->chat_plan(id, nlohmann::json::parse(R"({"task":"smile"})")); }) == 400);
  CHECK(status_of([&] { svc->chat_plan(id, nlohmann::json::parse(R"([{"task":"teleport"}])")); }) == 400);
}

TEST_CASE("service: turn metrics use the critics") {
  log::set_level(log::Level::error);
  CriticTraining ct;
  ct.oracle_samples = 200;
  ct.critic_samples = 200;
  ct.regressor.hidden = {16};
  ct.regressor.epochs = 2;
  TempRoot root;
  auto svc = make_service(root.path, train_critics(ct));
  const std::string id = svc->create_session();
  svc->attach_image(id, face_png(6));
  const auto turn = svc->chat(id, "smile");
  REQUIRE(turn["metrics"].is_object());
  CHECK(turn["metrics"]["oracle_delta"].size() == kAttributeCount);
  const double identity = turn["metrics"]["identity"];
  CHECK(identity >= -1.0);
  CHECK(identity <= 1.0 + 1e-6);
}

TEST_CASE("service: HTTP routes") {
  log::set_level(log::Level::error);
  TempRoot root;
  auto svc = make_service(root.path);
  httplib::Server server;
  svc->mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto r = cli.Post("/sessions");
  REQUIRE(r);
  CHECK(r->status == 201);
  const std::string id = nlohmann::json::parse(r->body)["session_id"];

  r = cli.Post("/sessions/" + id + "/chat", R"({"text":"smile"})", "application/json");
  CHECK(r->status == 409);
  CHECK(nlohmann::json::parse(r->body)["error"] == "no_image");

  r = cli.Post("/sessions/" + id + "/image", "not a png", "image/png");
  CHECK(r->status == 400);
  CHECK(nlohmann::json::parse(r->body)["error"] == "bad_image");

  const auto png = face_png(7);
  httplib::MultipartFormDataItems items{{"image", std::string(png.begin(), png.end()), "face.png", "image/png"}};
  r = cli.Post("/sessions/" + id + "/image", items);
  REQUIRE(r->status == 200);
  const std::string preview = nlohmann::json::parse(r->body)["preview"];

  r = cli.Get("/artifacts/" + preview);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  CHECK(std::vector<std::uint8_t>(r->body.begin(), r->body.end()) == svc->artifact(preview));

  r = cli.Post("/sessions/" + id + "/chat", R"({"text":"a bit pale"})", "application/json");
  REQUIRE(r->status == 200);
  CHECK(nlohmann::json::parse(r->body)["applied"][0]["args"]["strength"] == 0.2);

  r = cli.Post("/sessions/" + id + "/chat", R"({"plan":[{"task":"smile","id":0,"args":{"strength":0.3}}]})",
               "application/json");
  REQUIRE(r->status == 200);
  CHECK(nlohmann::json::parse(r->body)["provenance"] == "plan");

  r = cli.Post("/sessions/" + id + "/chat", R"({"plan":"smile"})", "application/json");
  CHECK(r->status == 400);
  CHECK(nlohmann::json::parse(r->body)["error"] == "bad_plan");
  r = cli.Post("/sessions/" + id + "/chat", R"({"text":""})", "application/json");
  CHECK(nlohmann::json::parse(r->body)["error"] == "empty_utterance");
  r = cli.Post("/sessions/" + id + "/chat", "{", "application/json");
  CHECK(r->status == 400);

  r = cli.Get("/sessions/" + id + "/history");
  CHECK(nlohmann::json::parse(r->body)["turns"].size() == 2);
  CHECK(cli.Get("/sessions/ffffffffffffffff/history")->status == 404);
  CHECK(cli.Get("/artifacts/..%2F..%2Fetc%2Fpasswd")->status == 404);

  r = cli.Get("/mappers");
  const auto m = nlohmann::json::parse(r->body)["mappers"];
  REQUIRE(m.size() == 7);
  CHECK(m[0]["available"] == true);
  CHECK(m[1]["available"] == false);

  server.stop();
  th.join();
}
