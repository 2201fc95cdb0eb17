// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/metrics.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace semedit {

DirectionCritic<float> oracle_direction_critic(AttributeOracle& oracle, const TextLexicon& lexicon) {
  if (!oracle.trained()) throw ConfigError("oracle_direction_critic: oracle is not trained");
  DirectionCritic<float> c;
  c.image = oracle.model();
  c.text = lexicon;
  c.differentiable = false;
  auto& last = c.image.net.layers.back();
  const Eigen::Index rows = last.weight.value.rows();
  last.weight.value.conservativeResize(rows + 1, Eigen::NoChange);
  last.weight.value.row(rows).setZero();
  last.bias.value.conservativeResize(rows + 1, Eigen::NoChange);
  last.bias.value(rows, 0) = 1.0f;
  last.weight.zero_grad();
  last.bias.zero_grad();
  return c;
}

MetricReport score_edits(const Matrix<float>& reference, const Matrix<float>& edited, Attribute target, double sign,
                         CriticSet& critics) {
  if (reference.rows() != edited.rows() || reference.cols() != edited.cols() || reference.cols() == 0)
    throw ArgumentError("score_edits: reference and edited batches must match and be nonempty");
  const Eigen::Index n = reference.cols();
  const int ti = static_cast<int>(target);
  MetricReport r;
  r.target = ti;
  r.sign = sign;
  r.faces = static_cast<int>(n);

  const Matrix<float> a0 = critics.oracle.measure(reference);
  const Matrix<float> a1 = critics.oracle.measure(edited);
  const Matrix<double> delta = (a1 - a0).cast<double>();

  Vector<double> dt = Vector<double>::Zero(TextLexicon::kDim);
  dt(ti) = sign;

  double dir_sum = 0.0, nontarget = 0.0;
  long kept = 0, hits = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector<double> di = Vector<double>::Zero(TextLexicon::kDim);
    di.head(kAttributeCount) = delta.col(j);
    const double nd = di.norm();
    dir_sum += nd > 1e-12 ? di.dot(dt) / (nd * dt.norm()) : 0.0;
    const double td = sign * delta(ti, j);
    r.target_deltas.push_back(td);
    if (td >= kFidelityThreshold) ++hits;
    for (int a = 0; a < kAttributeCount; ++a) {
      if (a == ti) continue;
      const double d = std::abs(delta(a, j));
      nontarget += d;
      if (d < kPreservationTolerance) ++kept;
    }
  }
  const double nf = static_cast<double>(n);
  r.directional = dir_sum / nf;
  r.preservation = static_cast<double>(kept) / (nf * (kAttributeCount - 1));
  r.nontarget_mean_delta = nontarget / (nf * (kAttributeCount - 1));
  r.target_hit_rate = static_cast<double>(hits) / nf;
  for (int a = 0; a < kAttributeCount; ++a) r.mean_delta[static_cast<std::size_t>(a)] = delta.row(a).mean();
  r.target_delta = sign * r.mean_delta[static_cast<std::size_t>(ti)];

  const Matrix<float> e0 = critics.identity.embed(reference);
  const Matrix<float> e1 = critics.identity.embed(edited);
  double id_sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double na = e0.col(j).norm(), nb = e1.col(j).norm();
    if (!(na > 0.0 && nb > 0.0)) throw NumericError("score_edits: zero identity embedding");
    id_sum += static_cast<double>(e0.col(j).dot(e1.col(j))) / (na * nb);
  }
  r.identity = id_sum / nf;
  return r;
}

std::vector<FaceParams> evaluation_faces(int n, Attribute target, double sign, std::uint64_t seed, double headroom) {
  if (n < 1) throw ArgumentError("evaluation_faces: n must be >= 1");
  std::vector<FaceParams> out;
  std::uint64_t chunk_seed = seed;
  while (static_cast<int>(out.size()) < n) {
    for (const auto& p : sample_faces(256, chunk_seed++)) {
      const double v = p[target];
      const double room = sign > 0 ? 1.0 - v : v;
      if (room >= headroom) out.push_back(p);
      if (static_cast<int>(out.size()) == n) break;
    }
  }
  return out;
}

Matrix<float> render_quantized(const std::vector<FaceParams>& faces) {
  Matrix<float> imgs = render_batch(faces);
  for (Eigen::Index j = 0; j < imgs.cols(); ++j) imgs.col(j) = quantize_u8(imgs.col(j));
  return imgs;
}

EditSession open_session(DiffusionAutoencoder<float>& model, const Matrix<float>& images, int t_sample) {
  EditSession s;
  s.images = images;
  s.grid = make_grid(t_sample, model.config.t_train);
  const auto lat = encode_latents(model, images, s.grid);
  s.z0 = lat.z;
  s.x_T = lat.x_T;
  s.reference = decode_edit(model, s.x_T, s.z0, s.z0, s.grid);
  return s;
}

Matrix<float> run_edit(DiffusionAutoencoder<float>& model, const EditSession& session, AttributeMapper& mapper,
                       double strength, SmsMode mode) {
  const Matrix<float> z_edit = apply_edit(session.z0, strength, mapper);
  return decode_edit(model, session.x_T, session.z0, z_edit, session.grid, mode);
}

Matrix<double> strength_response(DiffusionAutoencoder<float>& model, const EditSession& session,
                                 AttributeMapper& mapper, const std::vector<double>& strengths, Attribute target,
                                 CriticSet& critics) {
  Matrix<double> out(static_cast<Eigen::Index>(strengths.size()), session.z0.cols());
  for (std::size_t i = 0; i < strengths.size(); ++i) {
    const Matrix<float> img = run_edit(model, session, mapper, strengths[i]);
    out.row(static_cast<Eigen::Index>(i)) = critics.oracle.measure(img).row(static_cast<int>(target)).cast<double>();
  }
  return out;
}

double monotone_fraction(const Matrix<double>& response, double sign, double slack) {
  if (response.cols() == 0) throw ArgumentError("monotone_fraction: empty response");
  long ok = 0;
  for (Eigen::Index j = 0; j < response.cols(); ++j) {
    bool mono = true;
    for (Eigen::Index i = 1; i < response.rows(); ++i)
      if (sign * (response(i, j) - response(i - 1, j)) < -slack) mono = false;
    ok += mono ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(response.cols());
}

std::pair<Attribute, double> mapper_axis(const AttributeMapper& mapper, const TextLexicon& lexicon) {
  for (const std::string& phrase : {mapper.meta.y_tar, mapper.name}) {
    if (const auto ax = lexicon.axis(phrase)) return *ax;
  }
  throw LookupError("mapper '" + mapper.name + "' does not name a lexicon attribute", lexicon.phrases());
}

std::string report_jsonl(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["attribute"] = r.attribute;
  j["target"] = r.target >= 0 ? nlohmann::ordered_json(kAttributeNames[static_cast<std::size_t>(r.target)])
                              : nlohmann::ordered_json(nullptr);
  j["sign"] = r.sign;
  j["strength"] = r.strength;
  j["t_sample"] = r.t_sample;
  j["sms"] = r.sms;
  j["faces"] = r.faces;
  j["directional"] = r.directional;
  j["preservation"] = r.preservation;
  j["identity"] = r.identity;
  j["target_delta"] = r.target_delta;
  j["target_hit_rate"] = r.target_hit_rate;
  j["nontarget_mean_delta"] = r.nontarget_mean_delta;
  nlohmann::ordered_json d;
  for (int a = 0; a < kAttributeCount; ++a)
    d[kAttributeNames[static_cast<std::size_t>(a)]] = r.mean_delta[static_cast<std::size_t>(a)];
  j["mean_delta"] = d;
  return j.dump() + "\n";
}

std::string series_tsv(const std::string& x_name, const std::string& y_name,
                       const std::vector<std::pair<double, double>>& points) {
  std::ostringstream out;
  out << x_name << '\t' << y_name << '\n';
  out.precision(10);
  for (const auto& [x, y] : points) out << x << '\t' << y << '\n';
  return out.str();
}

}  // namespace semedit
