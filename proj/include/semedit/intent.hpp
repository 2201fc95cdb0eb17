// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Chat-to-edit understanding: phrase normalization, the mapper registry,
// the deterministic rule parser and the LLM backend with repair and fallback.

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "semedit/errors.hpp"

namespace semedit {

inline constexpr int kMinTimeSteps = 8;
inline constexpr int kMaxTimeSteps = 50;
inline constexpr int kDefaultTimeSteps = 8;
inline constexpr int kClearTimeSteps = 20;
inline constexpr double kMatchThreshold = 0.34;

/// One slot-filled edit: attribute A, strength S and sampling steps T.
struct EditTask {
  std::string task;       // canonical registry name
  int mapper_id = 0;
  std::string attribute;  // equals task for registry-resolved entries
  double strength = 0.5;
  int time_steps = kDefaultTimeSteps;

  bool operator==(const EditTask&) const = default;
};

using EditPlan = std::vector<EditTask>;

/// True iff strength is in [0, 1] and time_steps in [8, 50].
bool within_limits(const EditTask& t);

struct RegistryEntry {
  int id = 0;
  std::string name;
  std::vector<std::string> aliases;  // normalized, includes the name
  std::string artifact;              // mapper directory, relative to the registry file
};

class MapperRegistry {
 public:
  MapperRegistry() = default;
  /// Throws ConfigError on duplicate ids, empty names or an alias that
  /// resolves to two ids. Aliases are stored normalized.
  explicit MapperRegistry(std::vector<RegistryEntry> entries);

  /// The seven-entry registry with the default alias lists.
  static MapperRegistry defaults();

  const std::vector<RegistryEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  bool contains(int id) const;
  /// Throws LookupError for an unknown id.
  const RegistryEntry& at(int id) const;
  const RegistryEntry* find_name(const std::string& name) const;

  /// One JSON object per line, ordered by id, keys in fixed order.
  std::string to_jsonl() const;
  static MapperRegistry from_jsonl(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static MapperRegistry load(const std::filesystem::path& path);

 private:
  std::vector<RegistryEntry> entries_;
};

/// Intensity phrases mapped to strengths, plus the default strength.
struct StrengthLexicon {
  std::vector<std::pair<std::string, double>> phrases;  // normalized, multi-word allowed
  double default_strength = 0.5;
  std::vector<double> levels;  // ascending; the steps used by "stronger" / "weaker"

  static StrengthLexicon defaults();
  /// Throws ConfigError unless every value is in [0, 1].
  void validate() const;
  double raise(double s) const;
  double lower(double s) const;
};

/// Lowercase, apostrophes dropped, other punctuation plus '_' and '-' made
/// separators, then split on whitespace.
std::vector<std::string> normalize(const std::string& phrase);
std::string normalize_join(const std::string& phrase);

struct AttributeMatch {
  int mapper_id = 0;
  double score = 0.0;
  std::string alias;
};

/// Best token-set Jaccard over all aliases for the whole phrase; ties go to
/// the lowest id. Throws LookupError (three nearest aliases) below 0.34.
AttributeMatch match_attribute(const std::string& phrase, const MapperRegistry& reg);

enum class Provenance { rule, llm, fallback, replay, plan };
std::string to_string(Provenance p);

struct ParseResult {
  EditPlan tasks;
  Provenance provenance = Provenance::rule;
  std::string message;                // set when nothing was matched
  std::vector<std::string> warnings;  // clamping and fallback notes
};

/// Deterministic slot filling. Segments on "and", "also", "plus" and commas,
/// finds alias n-grams in each segment, takes strength from the nearest
/// intensity phrase and steps from clarity phrases or "<n> steps". Throws
/// ArgumentError for an empty utterance.
ParseResult parse_rule(const std::string& utterance, const MapperRegistry& reg, const StrengthLexicon& lex);

/// "stronger" / "weaker" style follow-ups: the previous plan with every
/// strength moved one lexicon level. nullopt when the utterance is not a
/// refinement or there is no previous plan.
std::optional<EditPlan> refine_plan(const std::string& utterance, const EditPlan& previous,
                                    const StrengthLexicon& lex);

// ---------------------------------------------------------------------------
// LLM backend

class ChatCompletionClient {
 public:
  virtual ~ChatCompletionClient() = default;
  /// Returns the assistant message content; throws IoError on transport failure.
  virtual std::string complete(const std::string& system, const std::string& user) = 0;
};

/// Generic chat-completion endpoint over plain HTTP, temperature 0.
class HttpChatClient : public ChatCompletionClient {
 public:
  HttpChatClient(std::string url, std::string key, std::string model, double timeout_s = 30.0);
  /// SEMEDIT_LLM_URL, SEMEDIT_LLM_KEY, SEMEDIT_LLM_MODEL; nullptr when the URL is unset.
  static std::unique_ptr<HttpChatClient> from_env();
  std::string complete(const std::string& system, const std::string& user) override;

 private:
  std::string url_, key_, model_;
  double timeout_s_;
};

/// The stage-1 template with its two placeholders still in place.
const std::string& stage1_template();

struct Demonstration {
  std::string utterance;
  EditPlan tasks;
};

/// The four worked examples injected into the prompt.
const std::vector<Demonstration>& demonstrations();

/// The stage-1 template with the registry list and demonstrations filled in.
std::string build_system_prompt(const MapperRegistry& reg);

/// Wire form [{"task", "id", "args": {"attribute", "strength", "time_steps"}}].
nlohmann::ordered_json plan_to_json(const EditPlan& plan);
std::string plan_to_wire(const EditPlan& plan);

/// Quote and bracket balancing of near-JSON task lists.
std::string repair_task_list(const std::string& text);

/// Parses and validates a wire-form task list. Entries are resolved against
/// the registry and clamped with warnings. Throws ArgumentError if the text is
/// not a list or an entry cannot be resolved.
EditPlan plan_from_json(const nlohmann::json& j, const MapperRegistry& reg, std::vector<std::string>* warnings);
EditPlan plan_from_wire(const std::string& text, const MapperRegistry& reg, std::vector<std::string>* warnings);

/// Sends the prompt, parses the reply (one repair pass) and falls back to
/// parse_rule on transport or validation failure.
ParseResult parse_llm(const std::string& utterance, const MapperRegistry& reg, ChatCompletionClient& client,
                      const StrengthLexicon& lex);

/// Deterministic reply naming each task's attribute, strength and steps.
std::string compose_reply(const ParseResult& parsed);

}  // namespace semedit
