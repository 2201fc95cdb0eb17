// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/intent.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "semedit/log.hpp"
#include "semedit/image_io.hpp"

namespace semedit {

namespace {

using Tokens = std::vector<std::string>;

// Tokens that never count towards an alias hit on their own.
const std::set<std::string>& stopwords() {
  static const std::set<std::string> s{"a",  "an", "the", "with", "without", "of", "to",
                                       "in", "on", "me", "my",  "this",    "that", "it"};
  return s;
}

const std::set<std::string>& coordinators() {
  static const std::set<std::string> s{"and", "also", "plus"};
  return s;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool has_content_overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  for (const auto& t : a)
    if (b.count(t) && !stopwords().count(t)) return true;
  return false;
}

std::string join(const Tokens& t, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += t[i];
  }
  return out;
}

// Start index of every occurrence of `needle` in `hay`.
std::vector<std::size_t> occurrences(const Tokens& hay, const Tokens& needle) {
  std::vector<std::size_t> out;
  if (needle.empty() || needle.size() > hay.size()) return out;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) out.push_back(i);
  return out;
}

std::vector<Tokens> segments(const std::string& utterance) {
  std::vector<Tokens> out;
  std::string piece;
  auto flush = [&] {
    Tokens cur;
    for (auto& t : normalize(piece)) {
      if (coordinators().count(t)) {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(std::move(t));
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    piece.clear();
  };
  for (char c : utterance) {
    if (c == ',' || c == ';') {
      flush();
    } else {
      piece += c;
    }
  }
  flush();
  return out;
}

double clamp_unit(double s) { return std::clamp(s, 0.0, 1.0); }

int clamp_steps(long t) { return static_cast<int>(std::clamp<long>(t, kMinTimeSteps, kMaxTimeSteps)); }

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e) return std::nullopt;
  return v;
}

}  // namespace

bool within_limits(const EditTask& t) {
  return t.strength >= 0.0 && t.strength <= 1.0 && t.time_steps >= kMinTimeSteps && t.time_steps <= kMaxTimeSteps;
}

// ---------------------------------------------------------------------------
// Normalization

std::vector<std::string> normalize(const std::string& phrase) {
  std::string s;
  s.reserve(phrase.size());
  for (unsigned char c : phrase) {
    if (c == '\'') continue;
    if (std::isalnum(c) || c >= 0x80) {
      s += static_cast<char>(std::tolower(c));
    } else if (c == '.' && !s.empty() && std::isdigit(static_cast<unsigned char>(s.back()))) {
      s += '.';  // decimal point stays inside numbers
    } else {
      s += ' ';
    }
  }
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) {
    while (!t.empty() && t.back() == '.') t.pop_back();
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::string normalize_join(const std::string& phrase) {
  const Tokens t = normalize(phrase);
  return join(t, 0, t.size());
}

// ---------------------------------------------------------------------------
// Registry

MapperRegistry::MapperRegistry(std::vector<RegistryEntry> entries) {
  std::map<std::string, int> owner;
  std::set<int> ids;
  for (auto& e : entries) {
    if (!ids.insert(e.id).second) throw ConfigError("registry: duplicate mapper id " + std::to_string(e.id));
    e.name = normalize_join(e.name);
    if (e.name.empty()) throw ConfigError("registry: mapper " + std::to_string(e.id) + " has no name");
    std::vector<std::string> aliases{e.name};
    for (const auto& a : e.aliases) {
      const std::string n = normalize_join(a);
      if (n.empty()) throw ConfigError("registry: empty alias for mapper " + std::to_string(e.id));
      if (std::find(aliases.begin(), aliases.end(), n) == aliases.end()) aliases.push_back(n);
    }
    for (const auto& a : aliases) {
      const auto [it, fresh] = owner.emplace(a, e.id);
      if (!fresh && it->second != e.id) throw ConfigError("registry: alias '" + a + "' maps to two mappers");
    }
    e.aliases = std::move(aliases);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  entries_ = std::move(entries);
}

MapperRegistry MapperRegistry::defaults() {
  return MapperRegistry({
      {0, "smile", {"smile", "smiling", "happy", "smiles"}, "mappers/smile"},
      {1, "young", {"young", "without wrinkle", "younger"}, "mappers/young"},
      {2, "pale", {"pale", "white", "whiter", "paler", "lighter"}, "mappers/pale"},
      {3, "curly hair", {"curly hair", "hair curly", "curly", "curls"}, "mappers/curly_hair"},
      {4, "red lipstick", {"red lipstick", "red lip stick", "lipstick red", "lip stick red", "lipstick"},
       "mappers/red_lipstick"},
      {5, "glasses", {"glasses", "eyeglasses", "spectacles"}, "mappers/glasses"},
      {6, "makeup", {"makeup"}, "mappers/makeup"},
  });
}

bool MapperRegistry::contains(int id) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.id == id; });
}

const RegistryEntry& MapperRegistry::at(int id) const {
  for (const auto& e : entries_)
    if (e.id == id) return e;
  std::vector<std::string> names;
  for (const auto& e : entries_) names.push_back(std::to_string(e.id) + ":" + e.name);
  throw LookupError("unknown mapper id " + std::to_string(id), names);
}

const RegistryEntry* MapperRegistry::find_name(const std::string& name) const {
  const std::string n = normalize_join(name);
  for (const auto& e : entries_)
    if (e.name == n) return &e;
  return nullptr;
}

std::string MapperRegistry::to_jsonl() const {
  std::string out;
  for (const auto& e : entries_) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["name"] = e.name;
    j["aliases"] = e.aliases;
    j["artifact"] = e.artifact;
    out += j.dump() + "\n";
  }
  return out;
}

MapperRegistry MapperRegistry::from_jsonl(const std::string& text) {
  std::vector<RegistryEntry> entries;
  std::istringstream in(text);
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RegistryEntry e;
      e.id = j.at("id").get<int>();
      e.name = j.at("name").get<std::string>();
      e.aliases = j.value("aliases", std::vector<std::string>{});
      e.artifact = j.value("artifact", std::string());
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("registry line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return MapperRegistry(std::move(entries));
}

void MapperRegistry::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file(path, to_jsonl());
}

MapperRegistry MapperRegistry::load(const std::filesystem::path& path) { return from_jsonl(read_text(path)); }

// ---------------------------------------------------------------------------
// Strength lexicon

StrengthLexicon StrengthLexicon::defaults() {
  StrengthLexicon lex;
  auto add = [&](std::initializer_list<const char*> words, double v) {
    for (const char* w : words) lex.phrases.emplace_back(normalize_join(w), v);
  };
  add({"a bit", "a little", "a little bit", "slightly", "slight", "light", "lightly", "subtle", "subtly", "mild",
       "mildly", "faint"},
      0.2);
  add({"moderate", "moderately", "medium"}, 0.5);
  add({"very", "deep", "strong", "strongly", "heavy", "heavily", "a lot", "lots of", "really", "intense"}, 0.9);
  add({"fully", "completely", "totally", "maximum", "max", "extremely"}, 1.0);
  lex.default_strength = 0.5;
  lex.levels = {0.2, 0.5, 0.9, 1.0};
  return lex;
}

void StrengthLexicon::validate() const {
  auto ok = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!ok(default_strength)) throw ConfigError("strength lexicon: default outside [0, 1]");
  for (const auto& [p, v] : phrases)
    if (!ok(v)) throw ConfigError("strength lexicon: '" + p + "' outside [0, 1]");
  if (levels.empty() || !std::is_sorted(levels.begin(), levels.end()))
    throw ConfigError("strength lexicon: levels must be nonempty and ascending");
  for (double v : levels)
    if (!ok(v)) throw ConfigError("strength lexicon: level outside [0, 1]");
}

double StrengthLexicon::raise(double s) const {
  for (double v : levels)
    if (v > s + 1e-9) return v;
  return levels.back();
}

double StrengthLexicon::lower(double s) const {
  for (auto it = levels.rbegin(); it != levels.rend(); ++it)
    if (*it < s - 1e-9) return *it;
  return levels.front();
}

// ---------------------------------------------------------------------------
// Matching and rule parsing

AttributeMatch match_attribute(const std::string& phrase, const MapperRegistry& reg) {
  if (reg.empty()) throw ConfigError("match_attribute: registry is empty");
  const Tokens t = normalize(phrase);
  const std::set<std::string> q(t.begin(), t.end());
  struct Scored {
    double score;
    int id;
    std::string alias;
  };
  std::vector<Scored> all;
  for (const auto& e : reg.entries())
    for (const auto& a : e.aliases) {
      const Tokens at = normalize(a);
      all.push_back({jaccard(q, {at.begin(), at.end()}), e.id, a});
    }
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  if (all.front().score < kMatchThreshold) {
    std::vector<std::string> nearest;
    for (const auto& s : all) {
      if (std::find(nearest.begin(), nearest.end(), s.alias) == nearest.end()) nearest.push_back(s.alias);
      if (nearest.size() == 3) break;
    }
    throw LookupError("no mapper matches '" + phrase + "'; nearest: " + nearest[0] +
                          (nearest.size() > 1 ? ", " + nearest[1] : "") + (nearest.size() > 2 ? ", " + nearest[2] : ""),
                      nearest);
  }
  return {all.front().id, all.front().score, all.front().alias};
}

ParseResult parse_rule(const std::string& utterance, const MapperRegistry& reg, const StrengthLexicon& lex) {
  const Tokens all_tokens = normalize(utterance);
  if (all_tokens.empty()) throw ArgumentError("parse_rule: empty utterance");
  if (reg.empty()) throw ConfigError("parse_rule: registry is empty");

  // Clarity sets the step count for the whole request.
  int steps = kDefaultTimeSteps;
  for (const char* p : {"clear", "clearer", "sharp", "sharper", "high quality", "hd", "detailed"})
    if (!occurrences(all_tokens, normalize(p)).empty()) steps = kClearTimeSteps;
  for (std::size_t i = 0; i + 1 < all_tokens.size(); ++i) {
    if (all_tokens[i + 1] != "steps" && all_tokens[i + 1] != "step") continue;
    if (const auto n = parse_number(all_tokens[i])) steps = clamp_steps(std::lround(*n));
  }

  struct AliasTokens {
    int id;
    std::set<std::string> set;
  };
  std::vector<AliasTokens> aliases;
  for (const auto& e : reg.entries())
    for (const auto& a : e.aliases) {
      const Tokens at = normalize(a);
      aliases.push_back({e.id, {at.begin(), at.end()}});
    }

  struct Hit {
    std::size_t segment, begin, end;
    int id;
    double score;
  };
  const std::vector<Tokens> segs = segments(utterance);
  std::vector<Hit> candidates;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const Tokens& seg = segs[s];
    for (std::size_t b = 0; b < seg.size(); ++b)
      for (std::size_t e = b + 1; e <= std::min(seg.size(), b + 4); ++e) {
        const std::set<std::string> w(seg.begin() + static_cast<std::ptrdiff_t>(b),
                                      seg.begin() + static_cast<std::ptrdiff_t>(e));
        for (const auto& a : aliases) {
          if (!has_content_overlap(w, a.set)) continue;
          const double j = jaccard(w, a.set);
          if (j >= kMatchThreshold) candidates.push_back({s, b, e, a.id, j});
        }
      }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.segment != b.segment) return a.segment < b.segment;
    if (a.begin != b.begin) return a.begin < b.begin;
    if (a.end - a.begin != b.end - b.begin) return a.end - a.begin < b.end - b.begin;
    return a.id < b.id;
  });
  std::vector<Hit> accepted;
  for (const Hit& h : candidates) {
    bool clash = false;
    for (const Hit& a : accepted)
      if (a.id == h.id || (a.segment == h.segment && h.begin < a.end && a.begin < h.end)) clash = true;
    if (!clash) accepted.push_back(h);
  }
  std::sort(accepted.begin(), accepted.end(), [](const Hit& a, const Hit& b) {
    return a.segment != b.segment ? a.segment < b.segment : a.begin < b.begin;
  });

  ParseResult r;
  r.provenance = Provenance::rule;
  for (const Hit& h : accepted) {
    const Tokens& seg = segs[h.segment];
    double strength = lex.default_strength;
    std::size_t best = SIZE_MAX, best_len = 0;
    for (const auto& [phrase, value] : lex.phrases) {
      const Tokens pt = normalize(phrase);
      for (std::size_t at : occurrences(seg, pt)) {
        const std::size_t end = at + pt.size();
        if (at < h.end && h.begin < end) continue;  // overlaps the attribute itself
        const std::size_t dist = end <= h.begin ? h.begin - end : at - h.end;
        if (dist < best || (dist == best && pt.size() > best_len)) {
          best = dist;
          best_len = pt.size();
          strength = value;
        }
      }
    }
    const RegistryEntry& e = reg.at(h.id);
    r.tasks.push_back({e.name, e.id, e.name, clamp_unit(strength), steps});
  }
  if (r.tasks.empty()) {
    std::string names;
    for (const auto& e : reg.entries()) names += (names.empty() ? "" : ", ") + e.name;
    r.message = "No editable attribute found. Available edits: " + names + ".";
  }
  return r;
}

std::optional<EditPlan> refine_plan(const std::string& utterance, const EditPlan& previous,
                                    const StrengthLexicon& lex) {
  if (previous.empty()) return std::nullopt;
  const Tokens t = normalize(utterance);
  const std::set<std::string> up{"stronger", "more", "increase", "intensify", "bolder", "further"};
  const std::set<std::string> down{"weaker", "less", "decrease", "reduce", "softer", "subtler", "fainter"};
  int dir = 0;
  for (const auto& w : t) {
    if (up.count(w)) dir = 1;
    if (down.count(w)) dir = -1;
  }
  if (dir == 0) return std::nullopt;
  EditPlan out = previous;
  for (auto& task : out) task.strength = dir > 0 ? lex.raise(task.strength) : lex.lower(task.strength);
  return out;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::rule: return "rule";
    case Provenance::llm: return "llm";
    case Provenance::fallback: return "fallback";
    case Provenance::replay: return "replay";
    case Provenance::plan: return "plan";
  }
  return "rule";
}

// ---------------------------------------------------------------------------
// Wire form

nlohmann::ordered_json plan_to_json(const EditPlan& plan) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& t : plan) {
    nlohmann::ordered_json j;
    j["task"] = t.task;
    j["id"] = t.mapper_id;
    j["args"] = {{"attribute", t.attribute}, {"strength", t.strength}, {"time_steps", t.time_steps}};
    arr.push_back(std::move(j));
  }
  return arr;
}

std::string plan_to_wire(const EditPlan& plan) { return plan_to_json(plan).dump(); }

std::string repair_task_list(const std::string& text) {
  std::string s = text;
  if (const auto b = s.find('['); b != std::string::npos) {
    const auto e = s.rfind(']');
    s = s.substr(b, e != std::string::npos && e > b ? e - b + 1 : std::string::npos);
  }
  std::replace(s.begin(), s.end(), '\'', '"');
  // {attribute": -> {"attribute":
  s = std::regex_replace(s, std::regex(R"(([\{,]\s*)([A-Za-z_][A-Za-z_0-9]*)\"\s*:)"), "$1\"$2\":");
  // bare keys
  s = std::regex_replace(s, std::regex(R"(([\{,]\s*)([A-Za-z_][A-Za-z_0-9]*)\s*:)"), "$1\"$2\":");
  // bare word values
  s = std::regex_replace(s, std::regex(R"((:\s*)([A-Za-z][A-Za-z0-9 _\-]*[A-Za-z0-9]|[A-Za-z])(\s*[,\}\]]))"),
                         "$1\"$2\"$3");
  s = std::regex_replace(s, std::regex(R"(\"(true|false|null)\")"), "$1");
  s = std::regex_replace(s, std::regex(R"(,\s*([\}\]]))"), "$1");

  // Bracket balancing outside strings. An object opening where a key is
  // expected closes the open objects back to the enclosing list first.
  std::string out;
  std::vector<char> stack;
  bool in_str = false, esc = false;
  char prev = 0;  // last significant character outside strings
  for (char c : s) {
    if (in_str) {
      out += c;
      if (esc) {
        esc = false;
      } else if (c == '\\') {
        esc = true;
      } else if (c == '"') {
        in_str = false;
        prev = '"';
      }
      continue;
    }
    switch (c) {
      case '"':
        in_str = true;
        out += c;
        break;
      case '{':
        if (!stack.empty() && stack.back() == '{' && (prev == ',' || prev == '{')) {
          const auto k = out.find_last_not_of(" \t\r\n");
          if (k != std::string::npos && out[k] == ',') out.erase(k);
          bool any = false;
          while (!stack.empty() && stack.back() == '{') {
            out += '}';
            stack.pop_back();
            any = true;
          }
          if (any) out += ", ";
        }
        stack.push_back('{');
        out += c;
        prev = c;
        break;
      case '[':
        stack.push_back('[');
        out += c;
        prev = c;
        break;
      case '}':
      case ']': {
        const char open = c == '}' ? '{' : '[';
        if (std::find(stack.begin(), stack.end(), open) == stack.end()) break;  // unmatched closer
        while (stack.back() != open) {
          out += stack.back() == '{' ? '}' : ']';
          stack.pop_back();
        }
        stack.pop_back();
        out += c;
        prev = c;
        break;
      }
      default:
        out += c;
        if (!std::isspace(static_cast<unsigned char>(c))) prev = c;
    }
  }
  if (in_str) out += '"';
  while (!stack.empty()) {
    out += stack.back() == '{' ? '}' : ']';
    stack.pop_back();
  }
  return out;
}

EditPlan plan_from_json(const nlohmann::json& j, const MapperRegistry& reg, std::vector<std::string>* warnings) {
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
    log::warn(w);
  };
  if (!j.is_array()) throw ArgumentError("task list must be a JSON array");
  EditPlan plan;
  for (const auto& item : j) {
    if (!item.is_object()) throw ArgumentError("task entry must be an object");
    const nlohmann::json args = item.contains("args") && item["args"].is_object() ? item["args"] : nlohmann::json::object();

    std::optional<int> by_name;
    for (const char* key : {"task", "attribute"}) {
      const nlohmann::json* src = item.contains(key) ? &item[key] : (args.contains(key) ? &args[key] : nullptr);
      if (by_name || !src || !src->is_string()) continue;
      try {
        by_name = match_attribute(src->get<std::string>(), reg).mapper_id;
      } catch (const LookupError&) {
      }
    }
    std::optional<int> by_id;
    if (item.contains("id")) {
      const auto& v = item["id"];
      std::optional<double> num;
      if (v.is_number()) num = v.get<double>();
      if (v.is_string()) num = parse_number(v.get<std::string>());
      if (num && std::isfinite(*num) && *num == std::floor(*num) && std::abs(*num) < 1e9 &&
          reg.contains(static_cast<int>(*num)))
        by_id = static_cast<int>(*num);
    }
    int id = 0;
    if (by_name) {
      if (by_id && *by_id != *by_name) warn("task name and mapper id disagree; using the name");
      id = *by_name;
    } else if (by_id) {
      id = *by_id;
    } else {
      throw ArgumentError("task entry names no registered mapper");
    }

    auto number_slot = [&](const char* key) -> std::optional<double> {
      const nlohmann::json* v = args.contains(key) ? &args[key] : (item.contains(key) ? &item[key] : nullptr);
      if (!v || v->is_null()) return std::nullopt;
      std::optional<double> num;
      if (v->is_number()) num = v->get<double>();
      if (v->is_string()) num = parse_number(v->get<std::string>());
      if (!num || !std::isfinite(*num)) throw ArgumentError(std::string("task slot '") + key + "' is not a number");
      return num;
    };

    const RegistryEntry& e = reg.at(id);
    EditTask t{e.name, e.id, e.name, 0.5, kDefaultTimeSteps};
    if (const auto s = number_slot("strength")) {
      t.strength = clamp_unit(*s);
      if (t.strength != *s) warn("strength " + std::to_string(*s) + " clamped to " + std::to_string(t.strength));
    } else {
      warn("strength missing for " + e.name + "; using 0.5");
    }
    if (const auto ts = number_slot("time_steps")) {
      const double r = std::round(std::clamp(*ts, -1e9, 1e9));
      t.time_steps = clamp_steps(static_cast<long>(r));
      if (static_cast<double>(t.time_steps) != *ts)
        warn("time_steps " + std::to_string(*ts) + " clamped to " + std::to_string(t.time_steps));
    }
    if (std::any_of(plan.begin(), plan.end(), [&](const EditTask& p) { return p.mapper_id == id; })) {
      warn("duplicate task for " + e.name + " dropped");
      continue;
    }
    plan.push_back(std::move(t));
  }
  return plan;
}

EditPlan plan_from_wire(const std::string& text, const MapperRegistry& reg, std::vector<std::string>* warnings) {
  std::string body = text;
  if (const auto b = body.find('['); b != std::string::npos) {
    const auto e = body.rfind(']');
    if (e != std::string::npos && e > b) body = body.substr(b, e - b + 1);
  }
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) {
    j = nlohmann::json::parse(repair_task_list(text), nullptr, false);
    if (j.is_discarded()) throw ArgumentError("task list is not parseable after repair");
    if (warnings) warnings->push_back("model output repaired");
  }
  return plan_from_json(j, reg, warnings);
}

ParseResult parse_llm(const std::string& utterance, const MapperRegistry& reg, ChatCompletionClient& client,
                      const StrengthLexicon& lex) {
  if (normalize(utterance).empty()) throw ArgumentError("parse_llm: empty utterance");
  auto fallback = [&](const std::string& why) {
    log::warn("llm parse falling back to rules: " + why);
    ParseResult r = parse_rule(utterance, reg, lex);
    r.provenance = Provenance::fallback;
    r.warnings.insert(r.warnings.begin(), "llm backend unavailable: " + why);
    return r;
  };
  std::string reply;
  try {
    reply = client.complete(build_system_prompt(reg), utterance);
  } catch (const std::exception& ex) {
    return fallback(ex.what());
  }
  ParseResult r;
  r.provenance = Provenance::llm;
  try {
    r.tasks = plan_from_wire(reply, reg, &r.warnings);
  } catch (const std::exception& ex) {
    return fallback(ex.what());
  }
  if (r.tasks.empty()) r.message = "No editable attribute found.";
  return r;
}

// ---------------------------------------------------------------------------
// Prompt

const std::string& stage1_template() {
  static const std::string t =
      "#1 Editing Intention Understanding Stage - You are an expert linguist. You need to summarize various "
      "situations based on existing knowledge and then select a reasonable solution. You need to parse user input to "
      "several tasks: [{\"task\": task, \"id\": mapper_id, \"args\": {\"attribute\": attribute, \"strength\": "
      "strength_score, \"time_steps\": sample_time_steps}}]. The task must be selected from the following options: "
      "{{Available Mapper List}}. You need to learn how to identify the subject, the descriptive words of the editing "
      "strength, and the descriptive words of image clarity from a sentence, and convert the latter two into "
      "floating-point numbers between 0 and 1, and integers between 8 and 50, respectively. The higher the numerical "
      "value, the stronger the degree. You need to read and understand the following examples: {{Demonstrations}. "
      "From the chat logs, you can find the path of the user-mentioned resources for your task planning.";
  return t;
}

const std::vector<Demonstration>& demonstrations() {
  static const std::vector<Demonstration> d{
      {"Can you help me add some smiles to the people in the photo?", {{"smile", 0, "smile", 0.5, 8}}},
      {"I would like to make this face look younger and the skin a bit lighter.",
       {{"young", 1, "young", 0.5, 8}, {"pale", 2, "pale", 0.2, 8}}},
      {"I would like to try curly hair and also add a deep red lipstick.",
       {{"curly hair", 3, "curly hair", 0.5, 8}, {"red lipstick", 4, "red lipstick", 0.9, 8}}},
      {"Please help me generate a clear photo of me wearing glasses and with light makeup.",
       {{"glasses", 5, "glasses", 0.5, 20}, {"makeup", 6, "makeup", 0.2, 20}}},
  };
  return d;
}

std::string build_system_prompt(const MapperRegistry& reg) {
  std::string list;
  for (const auto& e : reg.entries()) {
    list += "\n" + std::to_string(e.id) + ": [";
    for (std::size_t i = 0; i < e.aliases.size(); ++i) list += (i ? ", " : "") + e.aliases[i];
    list += "]";
  }
  std::string demos;
  for (const auto& d : demonstrations()) demos += "\n" + d.utterance + " => " + plan_to_wire(d.tasks);
  std::string p = stage1_template();
  auto put = [&](const std::string& key, const std::string& value) {
    const auto at = p.find(key);
    if (at != std::string::npos) p.replace(at, key.size(), value + "\n");
  };
  put("{{Available Mapper List}}", list);
  put("{{Demonstrations}", demos);
  return p;
}

// ---------------------------------------------------------------------------
// Replies

std::string compose_reply(const ParseResult& parsed) {
  if (parsed.tasks.empty()) {
    return "I could not find an editable attribute in your request." +
           (parsed.message.empty() ? std::string() : " " + parsed.message);
  }
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "Applied ";
  for (std::size_t i = 0; i < parsed.tasks.size(); ++i) {
    const EditTask& t = parsed.tasks[i];
    if (i > 0) out << (i + 1 == parsed.tasks.size() ? " and " : ", ");
    out << t.attribute << " at strength " << t.strength << " with " << t.time_steps << " steps";
  }
  out << '.';
  return out.str();
}

}  // namespace semedit
