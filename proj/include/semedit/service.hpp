// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Session-oriented edit service: attach an image, chat, get edited images
// back. Sessions, latents and artifacts persist under one root directory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "semedit/autoencoder.hpp"
#include "semedit/editor.hpp"
#include "semedit/intent.hpp"
#include "semedit/synthworld.hpp"

namespace httplib {
class Server;
}

namespace semedit {

/// An error with an HTTP status, a stable code and a detail message.
class ServiceError : public Error {
 public:
  ServiceError(int status, std::string code, const std::string& detail, int step = -1)
      : Error(detail), status_(status), code_(std::move(code)), step_(step) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  int step() const noexcept { return step_; }

 private:
  int status_;
  std::string code_;
  int step_;
};

enum class ParserBackend { rule, llm };

struct ServiceOptions {
  std::filesystem::path root;  // sessions/ and artifacts/ live here
  ParserBackend backend = ParserBackend::rule;
  SmsMode sms = SmsMode::on;
  int preview_steps = kDefaultTimeSteps;
};

struct ServiceConfig {
  ServiceOptions options;
  std::filesystem::path checkpoint;
  std::filesystem::path registry;  // mapper artifacts resolve relative to its directory
  std::filesystem::path critics;   // optional; enables oracle metrics
};

class EditService {
 public:
  /// Mappers are keyed by registry id; a registry entry without a mapper is
  /// listed as unavailable. `critics` enables oracle deltas in turn metrics.
  EditService(DaeCheckpoint checkpoint, MapperRegistry registry, std::map<int, AttributeMapper> mappers,
              std::optional<CriticSet> critics, ServiceOptions options,
              std::unique_ptr<ChatCompletionClient> llm = nullptr);
  ~EditService();

  /// Loads the checkpoint, registry, mappers and optional critics from disk.
  static std::unique_ptr<EditService> open(const ServiceConfig& cfg, std::unique_ptr<ChatCompletionClient> llm = nullptr);

  std::string create_session();
  /// Encodes and inverts a PNG; returns {"preview", "reconstruction_l1"}.
  nlohmann::ordered_json attach_image(const std::string& session_id, const std::vector<std::uint8_t>& png);
  /// Free-text turn.
  nlohmann::ordered_json chat(const std::string& session_id, const std::string& text);
  /// Structured turn: the plan replaces the active directive set.
  nlohmann::ordered_json chat_plan(const std::string& session_id, const nlohmann::json& plan,
                                   const std::string& text = "");
  nlohmann::ordered_json history(const std::string& session_id);
  nlohmann::ordered_json list_mappers() const;
  /// PNG bytes of a stored artifact; ServiceError 404 when missing.
  std::vector<std::uint8_t> artifact(const std::string& ref) const;

  /// Installs the HTTP routes on `server`.
  void mount(httplib::Server& server);
  /// Blocks serving on host:port until stop() is called.
  void serve(const std::string& host, int port);
  void stop();

  const MapperRegistry& registry() const { return registry_; }
  const ServiceOptions& options() const { return options_; }

 private:
  struct Session;
  struct Turn;

  std::shared_ptr<Session> find(const std::string& session_id);
  void persist(const Session& s) const;
  std::string store_png(const Vector<float>& image);
  const Matrix<float>& stochastic_code(Session& s, int steps);
  Matrix<float> decode(Session& s, const EditPlan& active, int steps);
  nlohmann::ordered_json run_turn(Session& s, const std::string& text, ParseResult parsed, EditPlan active);

  DaeCheckpoint checkpoint_;
  MapperRegistry registry_;
  std::map<int, AttributeMapper> mappers_;
  std::optional<CriticSet> critics_;
  ServiceOptions options_;
  std::unique_ptr<ChatCompletionClient> llm_;
  StrengthLexicon lexicon_;

  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex compute_mutex_;  // one model evaluation at a time
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace semedit
