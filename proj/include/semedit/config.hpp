// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration shared by the command line and the acceptance harness:
// tuned defaults, a strict JSON overlay and the manifest form.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "semedit/autoencoder.hpp"
#include "semedit/editor.hpp"
#include "semedit/synthworld.hpp"

namespace semedit {

struct DataSpec {
  int n = 10000;
  std::uint64_t seed = 1;
  int heldout = 200;
  std::uint64_t heldout_seed = 999;
};

struct EvalSpec {
  int faces = 200;
  std::uint64_t seed = 424242;
  double headroom = 0.3;  // room the target attribute has in the edit direction
  int t_sample = 8;
  std::vector<double> strengths{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<int> steps{4, 8, 12, 16, 20};
};

struct RunConfig {
  DataSpec data;
  DaeConfig dae;
  DaeTraining dae_training;
  CriticTraining critics;
  MapperTraining mapper;  // identity fields are filled per attribute from the registry
  EvalSpec eval;
};

RunConfig default_run_config();

/// Defaults overlaid with the JSON object at `path`. Unknown keys and type
/// mismatches throw ConfigError naming the dotted key.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig overlay_run_config(RunConfig base, const nlohmann::json& j);

nlohmann::ordered_json to_json(const RunConfig& cfg);

}  // namespace semedit
