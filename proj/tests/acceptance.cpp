// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run at the default configuration: trains the DAE,
// the critics and six mappers from scratch, then prints one PASS/FAIL line
// per criterion. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "semedit/config.hpp"
#include "semedit/image_io.hpp"
#include "semedit/intent.hpp"
#include "semedit/log.hpp"
#include "semedit/metrics.hpp"
#include "semedit/service.hpp"
// After Eigen: resolv.h defines a _res macro.
#include "httplib.h"

using namespace semedit;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kAlgebraBudgetS = 1.0;
constexpr double kGradientBudgetS = 30.0;
constexpr double kDenoiserGradTol = 1e-4;
constexpr double kEditGradTol = 1e-3;
constexpr double kReconT50 = 0.05;
constexpr double kReconT8 = 0.12;
constexpr double kDaeBudgetS = 15 * 60.0;
constexpr double kHitRate = 0.9;
constexpr double kNontarget = 0.05;
constexpr double kIdentity = 0.85;
constexpr double kMapperBudgetS = 10 * 60.0;
constexpr double kMonotone = 0.9;
constexpr double kActivateTol = 1e-12;
constexpr int kFuzzPayloads = 1000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(const std::string& criterion, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s  %s: %s\n", pass ? "PASS" : "FAIL", criterion.c_str(), detail.c_str());
  std::fflush(stdout);
}

void info(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void info(const char* fmt, ...) {
  std::printf("  ");
  va_list ap;
  va_start(ap, fmt);
  std::vprintf(fmt, ap);
  va_end(ap);
  std::printf("\n");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------

void diffusion_algebra() {
  using gradcheck::Mat;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  auto rel = [](const Mat& a, const Mat& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); };
  const NoiseSchedule s = make_schedule(100, 1e-3, 0.2);
  bool identity = true, direction = true, round_trip = true, monotone = true;

  for (int t = 0; t <= 100; ++t) {
    const Mat x = gradcheck::randn(12, 2, rng), e = gradcheck::randn(12, 2, rng);
    identity &= t == 0 || ddim_step(x, t, t, e, s) == x;
  }
  std::uniform_int_distribution<int> ut(1, 100);
  double worst_direction = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    int t = ut(rng), tp = ut(rng) - 1;
    if (tp >= t) std::swap(t, tp);
    if (t == tp) continue;
    const Mat x0 = gradcheck::randn(16, 2, rng), eps = gradcheck::randn(16, 2, rng);
    const Mat want = tp == 0 ? x0 : q_sample(x0, tp, eps, s);
    worst_direction = std::max(worst_direction, rel(ddim_step(q_sample(x0, t, eps, s), t, tp, eps, s), want));
  }
  direction = worst_direction < 1e-6;

  double worst_round_trip = 0.0;
  std::bernoulli_distribution keep(0.2);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat x0 = gradcheck::randn(24, 2, rng), z = gradcheck::randn(3, 2, rng), c = gradcheck::randn(24, 2, rng);
    auto constant = [&c](const Mat&, int, const Mat&) { return c; };
    std::vector<int> steps;
    for (int t = 1; t < 100; ++t)
      if (keep(rng)) steps.push_back(t);
    steps.push_back(100);
    const StepGrid grid = make_grid(steps, 100);
    const Mat xT = invert(x0, z, grid, constant, s);
    worst_round_trip = std::max(worst_round_trip, rel(generate(xT, constant_trajectory(z, grid), grid, constant, s), x0));
  }
  round_trip = worst_round_trip < 1e-5;

  std::uniform_real_distribution<double> ub(1e-5, 0.3);
  std::uniform_int_distribution<int> len(2, 400);
  for (int trial = 0; trial < 100; ++trial) {
    double a = ub(rng), b = ub(rng);
    if (a > b) std::swap(a, b);
    const NoiseSchedule r = make_schedule(len(rng), a, b);
    for (int t = 1; t <= r.t_train; ++t) monotone &= r.abar(t) < r.abar(t - 1) && r.abar(t) > 0.0;
  }
  const double elapsed = seconds_since(t0);
  char d[256];
  std::snprintf(d, sizeof d,
                "identity %s, noise direction max rel %.1e (< 1e-6), constant round trip max rel %.1e (< 1e-5), "
                "schedules %s; %.2f s (< %.0f s)",
                identity ? "exact" : "broken", worst_direction, worst_round_trip, monotone ? "monotone" : "not monotone",
                elapsed, kAlgebraBudgetS);
  verdict("diffusion algebra", identity && direction && round_trip && monotone && elapsed < kAlgebraBudgetS, d);
}

void gradient_suite() {
  const auto t0 = Clock::now();
  double worst_denoiser = 0.0, worst_pre = 0.0, worst_id = 0.0, worst_dir = 0.0;
  for (std::uint64_t seed : {2u, 3u}) {
    const auto e = gradcheck::denoiser_errors(seed);
    worst_denoiser = std::max({worst_denoiser, e.plain, e.weighted});
  }
  for (std::uint64_t seed : {11u, 12u}) {
    gradcheck::MicroEditSetup s = gradcheck::micro_edit(seed);
    for (SmsMode mode : {SmsMode::on, SmsMode::off}) {
      EditObjective obj;
      obj.y_tar = "smile";
      obj.sms = mode;
      const auto e = gradcheck::edit_errors(s, obj);
      worst_pre = std::max(worst_pre, e.pre);
      worst_id = std::max(worst_id, e.id);
      worst_dir = std::max(worst_dir, e.dir);
    }
  }
  const double elapsed = seconds_since(t0);
  char d[256];
  std::snprintf(d, sizeof d, "denoiser %.1e (< %.0e), L_pre %.1e, L_id %.1e, L_dir %.1e (< %.0e); %.2f s (< %.0f s)",
                worst_denoiser, kDenoiserGradTol, worst_pre, worst_id, worst_dir, kEditGradTol, elapsed,
                kGradientBudgetS);
  verdict("gradient suite", worst_denoiser < kDenoiserGradTol && std::max({worst_pre, worst_id, worst_dir}) < kEditGradTol &&
                                elapsed < kGradientBudgetS,
          d);
}

// ---------------------------------------------------------------------------

struct Trained {
  RunConfig cfg;
  DaeCheckpoint ckpt;
  CriticSet critics;
  std::map<int, AttributeMapper> mappers;
};

void reconstruction(Trained& tr) {
  const RunConfig& cfg = tr.cfg;
  const Matrix<float> images = render_quantized(sample_faces(cfg.data.n, cfg.data.seed));
  const Matrix<float> held = render_quantized(sample_faces(cfg.data.heldout, cfg.data.heldout_seed));
  const auto t0 = Clock::now();
  tr.ckpt = train_dae(images, cfg.dae, cfg.dae_training, &held);
  const double elapsed = seconds_since(t0);
  info("DAE: %ld iterations in %.0f s, held-out loss %.4f -> %.4f", cfg.dae_training.iterations, elapsed,
       tr.ckpt.meta.heldout_initial, tr.ckpt.meta.heldout_final);

  std::vector<double> errs;
  for (int t : cfg.eval.steps) {
    errs.push_back(relative_l1(reconstruct(tr.ckpt.model, held, t), held));
    info("T=%-3d held-out relative L1 %.4f", t, errs.back());
  }
  const double e8 = relative_l1(reconstruct(tr.ckpt.model, held, 8), held);
  const double e50 = relative_l1(reconstruct(tr.ckpt.model, held, 50), held);
  info("T=50  held-out relative L1 %.4f", e50);
  bool nonincreasing = true;
  for (std::size_t i = 1; i < errs.size(); ++i) nonincreasing &= errs[i] <= errs[i - 1];
  char d[256];
  std::snprintf(d, sizeof d, "T=50 %.4f (< %.2f), T=8 %.4f (< %.2f), %s over {4..20}, training %.0f s (< %.0f s)", e50,
                kReconT50, e8, kReconT8, nonincreasing ? "non-increasing" : "NOT non-increasing", elapsed, kDaeBudgetS);
  verdict("reconstruction", e50 < kReconT50 && e8 < kReconT8 && nonincreasing && elapsed < kDaeBudgetS, d);
}

struct MapperEval {
  std::string name;
  double train_s = 0.0;
  MetricReport on, off;
  double monotone = 0.0;
};

std::vector<MapperEval> train_and_evaluate(Trained& tr) {
  const RunConfig& cfg = tr.cfg;
  const MapperRegistry reg = MapperRegistry::defaults();
  std::vector<MapperEval> out;
  for (int id = 0; id < 6; ++id) {
    const RegistryEntry& entry = reg.at(id);
    MapperTraining mt = cfg.mapper;
    mt.mapper_id = entry.id;
    mt.name = entry.name;
    mt.aliases = entry.aliases;
    mt.objective.y_tar = entry.name;
    MapperEval ev;
    ev.name = entry.name;
    const auto t0 = Clock::now();
    AttributeMapper m = train_mapper(tr.ckpt, tr.critics, mt);
    ev.train_s = seconds_since(t0);

    const auto [target, sign] = mapper_axis(m, tr.critics.direction.text);
    const Matrix<float> images =
        render_quantized(evaluation_faces(cfg.eval.faces, target, sign, cfg.eval.seed, cfg.eval.headroom));
    const EditSession s = open_session(tr.ckpt.model, images, cfg.eval.t_sample);
    ev.on = score_edits(s.reference, run_edit(tr.ckpt.model, s, m, 1.0, SmsMode::on), target, sign, tr.critics);
    ev.off = score_edits(s.reference, run_edit(tr.ckpt.model, s, m, 1.0, SmsMode::off), target, sign, tr.critics);
    ev.monotone = monotone_fraction(strength_response(tr.ckpt.model, s, m, cfg.eval.strengths, target, tr.critics), sign);
    info("%-13s train %3.0f s  on: hit %.3f target %+.3f nontarget %.4f pres %.3f id %.3f | off: nontarget %.4f pres "
         "%.3f | monotone %.3f",
         ev.name.c_str(), ev.train_s, ev.on.target_hit_rate, ev.on.target_delta, ev.on.nontarget_mean_delta,
         ev.on.preservation, ev.on.identity, ev.off.nontarget_mean_delta, ev.off.preservation, ev.monotone);
    tr.mappers.emplace(id, std::move(m));
    out.push_back(std::move(ev));
  }
  return out;
}

void edit_criteria(const std::vector<MapperEval>& evals) {
  bool fidelity = true, monotone = true, sms = true;
  double min_hit = 1.0, max_nontarget = 0.0, min_id = 1.0, max_train = 0.0, min_mono = 1.0;
  double min_pres_gain = 1.0, min_nontarget_gain = 1.0;
  for (const auto& e : evals) {
    fidelity &= e.on.target_hit_rate >= kHitRate && e.on.nontarget_mean_delta < kNontarget &&
                e.on.identity >= kIdentity && e.train_s < kMapperBudgetS;
    monotone &= e.monotone >= kMonotone;
    sms &= e.on.preservation >= e.off.preservation && e.on.nontarget_mean_delta < e.off.nontarget_mean_delta;
    min_hit = std::min(min_hit, e.on.target_hit_rate);
    max_nontarget = std::max(max_nontarget, e.on.nontarget_mean_delta);
    min_id = std::min(min_id, e.on.identity);
    max_train = std::max(max_train, e.train_s);
    min_mono = std::min(min_mono, e.monotone);
    min_pres_gain = std::min(min_pres_gain, e.on.preservation - e.off.preservation);
    min_nontarget_gain = std::min(min_nontarget_gain, e.off.nontarget_mean_delta - e.on.nontarget_mean_delta);
  }
  char d[256];
  std::snprintf(d, sizeof d,
                "%zu mappers: min hit rate %.3f (>= %.2f), max non-target %.4f (< %.2f), min identity %.3f (>= %.2f), "
                "max training %.0f s (< %.0f s)",
                evals.size(), min_hit, kHitRate, max_nontarget, kNontarget, min_id, kIdentity, max_train,
                kMapperBudgetS);
  verdict("edit fidelity", fidelity && evals.size() == 6, d);
  verdict("monotone strength response", monotone && !evals.empty(),
          fmt("min monotone fraction over mappers %.3f (>= 0.90)", min_mono));
  std::snprintf(d, sizeof d,
                "min over mappers of on - off preservation %+.4f (>= 0), of off - on non-target delta %+.4f (> 0)",
                min_pres_gain, min_nontarget_gain);
  verdict("SMS ablation", sms && !evals.empty(), d);
}

void activation_algebra(Trained& tr) {
  const RunConfig& cfg = tr.cfg;
  const Matrix<float> images = render_quantized(sample_faces(16, 4242));
  const EditSession s = open_session(tr.ckpt.model, images, cfg.eval.t_sample);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> us(0.0, 1.0);

  double single = 0.0;
  for (auto& [id, m] : tr.mappers) {
    const double st = us(rng);
    single = std::max(single, static_cast<double>((activate(s.z0, {{&m, st}}) - apply_edit(s.z0, st, m)).cwiseAbs().maxCoeff()));
  }
  double permuted = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EditDirective> dirs;
    for (auto& [id, m] : tr.mappers) dirs.push_back({&m, us(rng)});
    const Matrix<float> ref = activate(s.z0, dirs);
    std::shuffle(dirs.begin(), dirs.end(), rng);
    permuted = std::max(permuted, static_cast<double>((activate(s.z0, dirs) - ref).cwiseAbs().maxCoeff()));
  }
  std::vector<EditDirective> zero;
  for (auto& [id, m] : tr.mappers) zero.push_back({&m, 0.0});
  const bool bitwise = decode_edit(tr.ckpt.model, s.x_T, s.z0, activate(s.z0, zero), s.grid) == s.reference;
  char d[256];
  std::snprintf(d, sizeof d, "single directive vs apply_edit %.1e, permutations %.1e (<= %.0e), s = 0 plan %s", single,
                permuted, kActivateTol, bitwise ? "bitwise equal to the reconstruction" : "DIFFERS from the reconstruction");
  verdict("activation algebra", single <= kActivateTol && permuted <= kActivateTol && bitwise, d);
}

class FixedClient : public ChatCompletionClient {
 public:
  explicit FixedClient(std::string reply) : reply_(std::move(reply)) {}
  std::string complete(const std::string&, const std::string&) override { return reply_; }

 private:
  std::string reply_;
};

void parser_criteria() {
  const MapperRegistry reg = MapperRegistry::defaults();
  const StrengthLexicon lex = StrengthLexicon::defaults();
  auto task = [](const char* name, int id, double st, int t) { return EditTask{name, id, name, st, t}; };
  const std::vector<std::pair<std::string, EditPlan>> golden{
      {"Can you help me add some smiles to the people in the photo?", {task("smile", 0, 0.5, 8)}},
      {"I would like to make this face look younger and the skin a bit lighter.",
       {task("young", 1, 0.5, 8), task("pale", 2, 0.2, 8)}},
      {"I would like to try curly hair and also add a deep red lipstick.",
       {task("curly hair", 3, 0.5, 8), task("red lipstick", 4, 0.9, 8)}},
      {"Please help me generate a clear photo of me wearing glasses and with light makeup.",
       {task("glasses", 5, 0.5, 20), task("makeup", 6, 0.2, 20)}},
  };
  int golden_ok = 0;
  for (const auto& [utterance, plan] : golden) golden_ok += parse_rule(utterance, reg, lex).tasks == plan;
  int aliases = 0, alias_ok = 0;
  for (const auto& e : reg.entries())
    for (const auto& a : e.aliases) {
      ++aliases;
      alias_ok += match_attribute(a, reg).mapper_id == e.id;
    }

  const std::vector<std::string> pieces{
      "[",     "]",          "{",        "}",          ",",     ":",        "\"",         "'",          "\"task\"",
      "task",  "\"id\"",     "\"args\"", "\"strength\"", "\"time_steps\"", "attribute\"", "smile", "\"smile\"",
      "glasses", "curly hair", "quantum", "-3",       "1.7",   "0.4",      "1e308",      "-1e308",     "99999999999",
      "null",  "true",       "\"0.5\"",  "\"nan\"",    " ",     "7",        "4",          "\"red lipstick\"", "NaN"};
  std::mt19937_64 rng(4040);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1), len(0, 40);
  int violations = 0;
  log::set_level(log::Level::error);
  for (int i = 0; i < kFuzzPayloads; ++i) {
    std::string payload;
    for (std::size_t k = len(rng); k > 0; --k) payload += pieces[pick(rng)];
    FixedClient client(payload);
    const ParseResult r = parse_llm("add a smile and glasses", reg, client, lex);
    std::set<int> ids;
    for (const auto& t : r.tasks) violations += !within_limits(t) || !reg.contains(t.mapper_id) || !ids.insert(t.mapper_id).second;
  }
  log::set_level(log::Level::info);
  char d[256];
  std::snprintf(d, sizeof d, "%d/4 demonstrations exact, %d/%d aliases round-trip, %d invariant violations in %d fuzzed payloads",
                golden_ok, alias_ok, aliases, violations, kFuzzPayloads);
  verdict("parser golden corpus", golden_ok == 4 && alias_ok == aliases && violations == 0, d);
}

void service_contract(Trained& tr) {
  const fs::path root = fs::temp_directory_path() / ("semedit_acceptance_" + std::to_string(std::random_device{}()));
  fs::remove_all(root);
  ServiceOptions opt;
  opt.root = root;
  opt.backend = ParserBackend::rule;
  EditService svc(tr.ckpt, MapperRegistry::defaults(), tr.mappers, tr.critics, opt);
  httplib::Server server;
  svc.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  std::vector<std::string> problems;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
    return ok;
  };
  try {
    auto r = cli.Post("/sessions");
    if (expect(r && r->status == 201, "create session")) {
      const std::string id = nlohmann::json::parse(r->body).at("session_id");
      FaceParams face = sample_faces(1, 5150)[0];
      face[Attribute::smile] = 0.1;
      const auto png = encode_png(render(face), kFaceShape);
      r = cli.Post("/sessions/" + id + "/image", std::string(png.begin(), png.end()), "image/png");
      if (expect(r && r->status == 200, "attach image")) {
        const auto attached = nlohmann::json::parse(r->body);
        const std::string preview = attached.at("preview");
        expect(attached.at("reconstruction_l1").get<double>() < kReconT8, "reconstruction preview quality");

        nlohmann::json body;
        body["text"] = "Can you help me add some smiles to the people in the photo?";
        r = cli.Post("/sessions/" + id + "/chat", body.dump(), "application/json");
        if (expect(r && r->status == 200, "chat turn")) {
          const auto turn = nlohmann::json::parse(r->body);
          expect(turn.at("provenance") == "rule", "rule provenance");
          expect(turn.at("applied").size() == 1 && turn["applied"][0]["task"] == "smile" &&
                     turn["applied"][0]["args"]["strength"] == 0.5,
                 "smile at 0.5 applied");
          const std::string image = turn.at("image");
          auto a = cli.Get("/artifacts/" + image);
          expect(a && a->status == 200 && a->get_header_value("Content-Type") == "image/png", "edited artifact served");
          if (a && a->status == 200) {
            const Vector<float> edited = decode_png(std::vector<std::uint8_t>(a->body.begin(), a->body.end()), kFaceShape);
            const auto before = tr.critics.oracle.measure_one(decode_png(svc.artifact(preview), kFaceShape));
            const auto after = tr.critics.oracle.measure_one(edited);
            info("service turn: oracle smile %.3f -> %.3f", before[0], after[0]);
            expect(after[0] > before[0], "oracle smile increases");
          }
          expect(turn.at("metrics").at("oracle_delta").at("smile").get<double>() > 0.0, "turn metrics");
        }

        body = nlohmann::json::object();
        body["plan"] = nlohmann::json::parse(R"([{"task":"smile","id":0,"args":{"strength":0.0,"time_steps":8}}])");
        r = cli.Post("/sessions/" + id + "/chat", body.dump(), "application/json");
        if (expect(r && r->status == 200, "plan turn")) {
          const std::string image = nlohmann::json::parse(r->body).at("image");
          expect(svc.artifact(image) == svc.artifact(preview), "zero-strength plan equals the preview bitwise");
        }
        r = cli.Get("/sessions/" + id + "/history");
        expect(r && r->status == 200 && nlohmann::json::parse(r->body).at("turns").size() == 2, "history has two turns");
      }
    }
  } catch (const std::exception& e) {
    problems.push_back(std::string("exception: ") + e.what());
  }
  server.stop();
  th.join();
  fs::remove_all(root);
  std::string detail = "create -> attach -> chat over HTTP with the rule parser";
  for (const auto& p : problems) detail += "; failed: " + p;
  verdict("service contract", problems.empty(), detail);
}

void save_artifacts(Trained& tr, const fs::path& out) {
  fs::create_directories(out);
  save_checkpoint(tr.ckpt, out / "checkpoint");
  save_critics(tr.critics, out / "critics");
  const MapperRegistry reg = MapperRegistry::defaults();
  for (auto& [id, m] : tr.mappers) save_mapper(m, out / reg.at(id).artifact);
  reg.save(out / "registry.jsonl");
  info("artifacts written to %s", out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("semedit acceptance run");
  std::string out;
  app.add_option("--out", out, "Also save the trained checkpoint, critics, mappers and registry here");
  CLI11_PARSE(app, argc, argv);
  log::set_level(log::Level::warning);

  diffusion_algebra();
  gradient_suite();
  parser_criteria();

  Trained tr;
  tr.cfg = default_run_config();
  reconstruction(tr);
  const auto t0 = Clock::now();
  tr.critics = train_critics(tr.cfg.critics);
  info("critics trained in %.0f s", seconds_since(t0));
  const auto evals = train_and_evaluate(tr);
  edit_criteria(evals);
  activation_algebra(tr);
  service_contract(tr);
  if (!out.empty()) save_artifacts(tr, out);

  std::printf("%d criteria failed\n", failures);
  return failures;
}
