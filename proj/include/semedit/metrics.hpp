// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Edit scoring against the synthetic oracle and critics, plus the
// evaluation protocols behind the CLI sweeps and ablations.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "semedit/autoencoder.hpp"
#include "semedit/diffusion.hpp"
#include "semedit/editor.hpp"
#include "semedit/synthworld.hpp"

namespace semedit {

inline constexpr double kPreservationTolerance = 0.05;
inline constexpr double kFidelityThreshold = 0.1;

/// Scores of one batch of edits against their references.
struct MetricReport {
  std::string attribute;    // registry name of the edit
  int target = -1;          // Attribute index, -1 when several attributes are edited
  double sign = 1.0;        // +1 raises the target attribute, -1 lowers it
  double strength = 0.0;
  int t_sample = 0;
  std::string sms = "on";
  int faces = 0;

  double directional = 0.0;   // mean cos(oracle-space motion, target text direction)
  double preservation = 0.0;  // fraction of non-target attributes moving < 0.05
  double identity = 0.0;      // mean identity-critic cosine between reference and edit
  std::array<double, kAttributeCount> mean_delta{};  // signed mean oracle change per attribute
  double target_delta = 0.0;            // mean signed change along the edit direction
  double target_hit_rate = 0.0;         // fraction of faces whose signed change >= 0.1
  double nontarget_mean_delta = 0.0;    // mean |change| over non-target attributes
  std::vector<double> target_deltas;    // per-face signed change
};

/// Oracle-space direction critic used only for scoring; never differentiable.
DirectionCritic<float> oracle_direction_critic(AttributeOracle& oracle, const TextLexicon& lexicon);

/// Compares edited images with their references (columns pair up).
/// The directional score uses oracle embeddings [attributes; 1] with the
/// lexicon's text axes.
MetricReport score_edits(const Matrix<float>& reference, const Matrix<float>& edited, Attribute target, double sign,
                         CriticSet& critics);

/// Held-out faces whose true target attribute leaves at least `headroom`
/// room in the edit direction; the first n such faces of the seed's stream.
std::vector<FaceParams> evaluation_faces(int n, Attribute target, double sign, std::uint64_t seed,
                                         double headroom = 0.3);

/// Quantized renders, as a dataset stored on disk would hold them.
Matrix<float> render_quantized(const std::vector<FaceParams>& faces);

/// Latents plus the s = 0 decode, for repeated edits of the same faces.
struct EditSession {
  Matrix<float> images;
  Matrix<float> z0;
  Matrix<float> x_T;
  Matrix<float> reference;  // s = 0 decode, equal to the plain reconstruction
  StepGrid grid;
};

EditSession open_session(DiffusionAutoencoder<float>& model, const Matrix<float>& images, int t_sample);

/// Decodes z0 + s * dz through the chosen SMS mode.
Matrix<float> run_edit(DiffusionAutoencoder<float>& model, const EditSession& session, AttributeMapper& mapper,
                       double strength, SmsMode mode = SmsMode::on);

/// Oracle target value for each face at each strength (rows: strengths).
Matrix<double> strength_response(DiffusionAutoencoder<float>& model, const EditSession& session,
                                 AttributeMapper& mapper, const std::vector<double>& strengths, Attribute target,
                                 CriticSet& critics);

/// Fraction of columns that are nondecreasing (times sign) down the rows,
/// allowing `slack` of oracle noise per step.
double monotone_fraction(const Matrix<double>& response, double sign, double slack = 0.0);

/// Target axis and sign a mapper's prompt refers to.
std::pair<Attribute, double> mapper_axis(const AttributeMapper& mapper, const TextLexicon& lexicon);

/// One JSON object per line.
std::string report_jsonl(const MetricReport& r);

/// Plot-ready two-column series with a header row.
std::string series_tsv(const std::string& x_name, const std::string& y_name,
                       const std::vector<std::pair<double, double>>& points);

}  // namespace semedit
