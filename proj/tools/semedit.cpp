// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// semedit command line: data generation, training, one-shot edits, sweeps,
// the SMS ablation and the HTTP service.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "semedit/config.hpp"
#include "semedit/image_io.hpp"
#include "semedit/intent.hpp"
#include "semedit/log.hpp"
#include "semedit/metrics.hpp"
#include "semedit/service.hpp"

using namespace semedit;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kLookup = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

RunConfig load_config(const Common& c) {
  return c.config.empty() ? default_run_config() : load_run_config(c.config);
}

/// Creates `out`; refuses a directory that already holds a run unless forced.
fs::path prepare_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  const fs::path out = c.out;
  if (fs::exists(out / "run.json") && !c.force)
    throw ConfigError("refusing to overwrite " + out.string() + " (pass --force)");
  fs::create_directories(out);
  return out;
}

/// run.json: everything that determines the outputs, no timestamps.
void write_run(const fs::path& out, const std::string& command, const RunConfig& cfg, ojson inputs) {
  ojson j;
  j["format"] = "semedit.run/1";
  j["command"] = command;
  j["inputs"] = std::move(inputs);
  j["config"] = to_json(cfg);
  write_file(out / "run.json", j.dump(2) + "\n");
}

Matrix<float> quantized(Matrix<float> images) {
  for (Eigen::Index j = 0; j < images.cols(); ++j) images.col(j) = quantize_u8(images.col(j));
  return images;
}

Matrix<float> training_images(const std::string& data_dir, const RunConfig& cfg) {
  if (!data_dir.empty()) return load_dataset(data_dir).images;
  return render_quantized(sample_faces(cfg.data.n, cfg.data.seed));
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse '" + item + "' in value list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty value list");
  return out;
}

void print_report(const MetricReport& r) {
  std::printf("%-14s s=%.2f T=%-3d sms=%-7s hit=%.3f target=%+.3f nontarget=%.4f pres=%.3f id=%.3f dir=%.3f\n",
              r.attribute.c_str(), r.strength, r.t_sample, r.sms.c_str(), r.target_hit_rate, r.target_delta,
              r.nontarget_mean_delta, r.preservation, r.identity, r.directional);
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c, int n) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.data.seed = *c.seed;
  if (n > 0) cfg.data.n = n;
  const fs::path out = prepare_out(c);
  save_dataset(out, sample_faces(cfg.data.n, cfg.data.seed), cfg.data.seed);
  write_run(out, "gen-data", cfg, ojson::object());
  std::printf("wrote %d faces to %s\n", cfg.data.n, out.c_str());
  return kOk;
}

int cmd_train_dae(const Common& c, const std::string& data, std::optional<long> iterations) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.dae_training.seed = cfg.dae.init_seed = *c.seed;
  if (iterations) cfg.dae_training.iterations = *iterations;
  const fs::path out = prepare_out(c);
  const Matrix<float> images = training_images(data, cfg);
  const Matrix<float> held = render_quantized(sample_faces(cfg.data.heldout, cfg.data.heldout_seed));
  const DaeCheckpoint ckpt = train_dae(images, cfg.dae, cfg.dae_training, &held);
  save_checkpoint(ckpt, out);

  std::vector<std::pair<double, double>> series;
  std::vector<int> steps = cfg.eval.steps;
  if (std::find(steps.begin(), steps.end(), 50) == steps.end() && cfg.dae.t_train >= 50) steps.push_back(50);
  auto& model = const_cast<DaeCheckpoint&>(ckpt).model;
  for (int t : steps) {
    const double err = relative_l1(reconstruct(model, held, t), held);
    series.emplace_back(t, err);
    std::printf("T=%-3d held-out relative L1 %.4f\n", t, err);
  }
  write_file(out / "reconstruction.tsv", series_tsv("t_sample", "relative_l1", series));
  ojson inputs;
  inputs["data"] = data.empty() ? ojson(nullptr) : ojson(data);
  write_run(out, "train-dae", cfg, inputs);
  return kOk;
}

int cmd_train_critics(const Common& c) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.critics.regressor.seed = *c.seed;
  const fs::path out = prepare_out(c);
  const CriticSet critics = train_critics(cfg.critics);
  save_critics(critics, out);
  for (int a = 0; a < kAttributeCount; ++a)
    std::printf("oracle MAE %-10s %.4f\n", kAttributeNames[static_cast<std::size_t>(a)],
                critics.report.oracle_mae[static_cast<std::size_t>(a)]);
  std::printf("direction RMSE %.4f  identity RMSE %.4f\n", critics.report.direction_rmse,
              critics.report.identity_rmse);
  write_run(out, "train-critics", cfg, ojson::object());
  return kOk;
}

MapperRegistry registry_or_default(const std::string& path) {
  return path.empty() ? MapperRegistry::defaults() : MapperRegistry::load(path);
}

int cmd_train_mapper(const Common& c, const std::string& checkpoint, const std::string& critics_dir,
                     const std::string& attribute, const std::string& registry, std::optional<long> iterations) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.mapper.seed = *c.seed;
  if (iterations) cfg.mapper.iterations = *iterations;
  const MapperRegistry reg = registry_or_default(registry);
  const RegistryEntry& entry = reg.at(match_attribute(attribute, reg).mapper_id);
  const fs::path out = prepare_out(c);
  const DaeCheckpoint ckpt = load_checkpoint(checkpoint);
  CriticSet critics = load_critics(critics_dir);

  MapperTraining mt = cfg.mapper;
  mt.mapper_id = entry.id;
  mt.name = entry.name;
  mt.aliases = entry.aliases;
  mt.objective.y_tar = entry.name;
  AttributeMapper m = train_mapper(ckpt, critics, mt);
  save_mapper(m, out);
  std::printf("%s: loss %.4f -> %.4f (held-out %.4f -> %.4f)\n", entry.name.c_str(), m.meta.initial_loss,
              m.meta.final_loss, m.meta.heldout_initial, m.meta.heldout_final);
  ojson inputs;
  inputs["checkpoint"] = checkpoint;
  inputs["critics"] = critics_dir;
  inputs["attribute"] = entry.name;
  write_run(out, "train-mapper", cfg, inputs);
  return kOk;
}

int cmd_write_registry(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  if (fs::exists(c.out) && !c.force) throw ConfigError("refusing to overwrite " + c.out + " (pass --force)");
  if (fs::path(c.out).has_parent_path()) fs::create_directories(fs::path(c.out).parent_path());
  MapperRegistry::defaults().save(c.out);
  std::printf("wrote %s\n", c.out.c_str());
  return kOk;
}

struct EditArgs {
  std::string image, text, checkpoint, registry, critics;
  std::optional<double> strength;
  std::optional<int> steps;
  std::string sms = "on";
  std::string backend = "rule";
};

int cmd_edit(const Common& c, const EditArgs& a) {
  const MapperRegistry reg = MapperRegistry::load(a.registry);
  const StrengthLexicon lex = StrengthLexicon::defaults();
  ParseResult parsed;
  if (a.backend == "llm") {
    auto client = HttpChatClient::from_env();
    if (!client) throw ConfigError("--backend llm needs SEMEDIT_LLM_URL (and SEMEDIT_LLM_KEY, SEMEDIT_LLM_MODEL)");
    parsed = parse_llm(a.text, reg, *client, lex);
  } else {
    parsed = parse_rule(a.text, reg, lex);
  }
  for (const auto& w : parsed.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  if (parsed.tasks.empty()) {
    std::fprintf(stderr, "%s\n", parsed.message.c_str());
    try {
      match_attribute(a.text, reg);
    } catch (const LookupError& e) {
      std::fprintf(stderr, "%s\n", e.what());
    }
    return kLookup;
  }
  for (auto& t : parsed.tasks) {
    if (a.strength) t.strength = std::clamp(*a.strength, 0.0, 1.0);
    if (a.steps) t.time_steps = std::clamp(*a.steps, kMinTimeSteps, kMaxTimeSteps);
  }
  const fs::path out = prepare_out(c);

  DaeCheckpoint ckpt = load_checkpoint(a.checkpoint);
  std::map<int, AttributeMapper> mappers;
  std::vector<EditDirective> directives;
  for (const auto& t : parsed.tasks) {
    const fs::path dir = fs::path(a.registry).parent_path() / reg.at(t.mapper_id).artifact;
    mappers.emplace(t.mapper_id, load_mapper(dir));
  }
  for (const auto& t : parsed.tasks) directives.push_back({&mappers.at(t.mapper_id), t.strength});

  const std::string bytes = read_text(a.image);
  const Matrix<float> source = decode_png(std::vector<std::uint8_t>(bytes.begin(), bytes.end()), ckpt.model.config.shape);
  int steps = 0;
  for (const auto& t : parsed.tasks) steps = std::max(steps, t.time_steps);
  const StepGrid grid = make_grid(steps, ckpt.model.config.t_train);
  const auto lat = encode_latents(ckpt.model, source, grid);
  const Matrix<float> recon = quantized(decode_edit(ckpt.model, lat.x_T, lat.z, lat.z, grid));
  const Matrix<float> z_edit = activate(lat.z, directives);
  const Matrix<float> edited =
      quantized(decode_edit(ckpt.model, lat.x_T, lat.z, z_edit, grid, parse_sms_mode(a.sms)));
  write_file(out / "reconstruction.png", encode_png(recon.col(0), ckpt.model.config.shape));
  write_file(out / "edited.png", encode_png(edited.col(0), ckpt.model.config.shape));
  write_file(out / "plan.json", plan_to_json(parsed.tasks).dump(2) + "\n");
  std::printf("%s\n", compose_reply(parsed).c_str());

  if (!a.critics.empty()) {
    CriticSet critics = load_critics(a.critics);
    std::string reports;
    for (const auto& t : parsed.tasks) {
      const auto [attr, sign] = mapper_axis(mappers.at(t.mapper_id), critics.direction.text);
      MetricReport r = score_edits(recon, edited, attr, sign, critics);
      r.attribute = t.task;
      r.strength = t.strength;
      r.t_sample = steps;
      r.sms = a.sms;
      print_report(r);
      reports += report_jsonl(r);
    }
    write_file(out / "report.jsonl", reports);
  }
  ojson inputs;
  inputs["image"] = a.image;
  inputs["text"] = a.text;
  inputs["checkpoint"] = a.checkpoint;
  inputs["registry"] = a.registry;
  inputs["critics"] = a.critics.empty() ? ojson(nullptr) : ojson(a.critics);
  inputs["sms"] = a.sms;
  write_run(out, "edit", load_config(c), inputs);
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, critics, mapper;
  double strength = 1.0;
  std::string values;
  std::optional<int> steps;
  std::string sms = "on";
};

struct EvalContext {
  RunConfig cfg;
  DaeCheckpoint ckpt;
  CriticSet critics;
  AttributeMapper mapper;
  Attribute target{};
  double sign = 1.0;
  Matrix<float> images;
};

EvalContext open_eval(const Common& c, const EvalArgs& a) {
  EvalContext e;
  e.cfg = load_config(c);
  if (c.seed) e.cfg.eval.seed = *c.seed;
  if (a.steps) e.cfg.eval.t_sample = *a.steps;
  e.ckpt = load_checkpoint(a.checkpoint);
  e.critics = load_critics(a.critics);
  e.mapper = load_mapper(a.mapper);
  std::tie(e.target, e.sign) = mapper_axis(e.mapper, e.critics.direction.text);
  e.images = render_quantized(evaluation_faces(e.cfg.eval.faces, e.target, e.sign, e.cfg.eval.seed, e.cfg.eval.headroom));
  return e;
}

MetricReport evaluate(EvalContext& e, const EditSession& s, double strength, SmsMode mode) {
  const Matrix<float> edited = run_edit(e.ckpt.model, s, e.mapper, strength, mode);
  MetricReport r = score_edits(s.reference, edited, e.target, e.sign, e.critics);
  r.attribute = e.mapper.name;
  r.strength = strength;
  r.t_sample = static_cast<int>(s.grid.steps.size());
  r.sms = to_string(mode);
  return r;
}

ojson eval_inputs(const EvalArgs& a) {
  ojson j;
  j["checkpoint"] = a.checkpoint;
  j["critics"] = a.critics;
  j["mapper"] = a.mapper;
  j["strength"] = a.strength;
  return j;
}

int cmd_ablate_sms(const Common& c, const EvalArgs& a) {
  const fs::path out = prepare_out(c);
  EvalContext e = open_eval(c, a);
  const EditSession s = open_session(e.ckpt.model, e.images, e.cfg.eval.t_sample);
  const MetricReport on = evaluate(e, s, a.strength, SmsMode::on);
  const MetricReport off = evaluate(e, s, a.strength, SmsMode::off);
  print_report(on);
  print_report(off);
  write_file(out / "reports.jsonl", report_jsonl(on) + report_jsonl(off));
  ojson d;
  d["preservation"] = on.preservation - off.preservation;
  d["nontarget_mean_delta"] = on.nontarget_mean_delta - off.nontarget_mean_delta;
  d["identity"] = on.identity - off.identity;
  d["directional"] = on.directional - off.directional;
  d["target_delta"] = on.target_delta - off.target_delta;
  ojson summary;
  summary["on_minus_off"] = d;
  summary["sms_preserves_more"] = on.preservation >= off.preservation && on.nontarget_mean_delta < off.nontarget_mean_delta;
  summary["same_directional_sign"] = (on.directional >= 0) == (off.directional >= 0);
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::printf("on - off: preservation %+.4f  nontarget %+.4f\n", d["preservation"].get<double>(),
              d["nontarget_mean_delta"].get<double>());
  write_run(out, "ablate-sms", e.cfg, eval_inputs(a));
  return kOk;
}

int cmd_sweep_T(const Common& c, const EvalArgs& a) {
  const fs::path out = prepare_out(c);
  EvalContext e = open_eval(c, a);
  std::vector<int> steps = e.cfg.eval.steps;
  if (!a.values.empty()) {
    steps.clear();
    for (double v : parse_list(a.values)) steps.push_back(static_cast<int>(v));
  }
  const SmsMode mode = parse_sms_mode(a.sms);
  std::string reports;
  std::vector<std::pair<double, double>> recon, runtime, target;
  for (int t : steps) {
    const auto t0 = std::chrono::steady_clock::now();
    const EditSession s = open_session(e.ckpt.model, e.images, t);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const MetricReport r = evaluate(e, s, a.strength, mode);
    print_report(r);
    reports += report_jsonl(r);
    recon.emplace_back(t, relative_l1(s.reference, s.images));
    runtime.emplace_back(t, secs);
    target.emplace_back(t, r.target_delta);
  }
  write_file(out / "reports.jsonl", reports);
  write_file(out / "reconstruction.tsv", series_tsv("t_sample", "relative_l1", recon));
  write_file(out / "runtime.tsv", series_tsv("t_sample", "seconds", runtime));
  write_file(out / "target_delta.tsv", series_tsv("t_sample", "target_delta", target));
  write_run(out, "sweep-T", e.cfg, eval_inputs(a));
  return kOk;
}

int cmd_sweep_s(const Common& c, const EvalArgs& a) {
  const fs::path out = prepare_out(c);
  EvalContext e = open_eval(c, a);
  const std::vector<double> strengths = a.values.empty() ? e.cfg.eval.strengths : parse_list(a.values);
  const SmsMode mode = parse_sms_mode(a.sms);
  const EditSession s = open_session(e.ckpt.model, e.images, e.cfg.eval.t_sample);
  std::string reports;
  std::vector<std::pair<double, double>> target, nontarget;
  Matrix<double> response(static_cast<Eigen::Index>(strengths.size()), e.images.cols());
  for (std::size_t i = 0; i < strengths.size(); ++i) {
    const Matrix<float> edited = run_edit(e.ckpt.model, s, e.mapper, strengths[i], mode);
    MetricReport r = score_edits(s.reference, edited, e.target, e.sign, e.critics);
    r.attribute = e.mapper.name;
    r.strength = strengths[i];
    r.t_sample = e.cfg.eval.t_sample;
    r.sms = to_string(mode);
    print_report(r);
    reports += report_jsonl(r);
    target.emplace_back(strengths[i], r.target_delta);
    nontarget.emplace_back(strengths[i], r.nontarget_mean_delta);
    response.row(static_cast<Eigen::Index>(i)) =
        e.critics.oracle.measure(edited).row(static_cast<int>(e.target)).cast<double>();
  }
  write_file(out / "reports.jsonl", reports);
  write_file(out / "target_delta.tsv", series_tsv("strength", "target_delta", target));
  write_file(out / "nontarget_delta.tsv", series_tsv("strength", "nontarget_mean_delta", nontarget));
  ojson summary;
  summary["monotone_fraction"] = monotone_fraction(response, e.sign);
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::printf("monotone fraction %.3f\n", summary["monotone_fraction"].get<double>());
  write_run(out, "sweep-s", e.cfg, eval_inputs(a));
  return kOk;
}

struct ServeArgs {
  std::string root, checkpoint, registry, critics, host = "127.0.0.1", backend = "rule", sms = "on";
  int port = 8080;
  int steps = kDefaultTimeSteps;
};

int cmd_serve(const ServeArgs& a) {
  ServiceConfig cfg;
  cfg.options.root = a.root;
  cfg.options.backend = a.backend == "llm" ? ParserBackend::llm : ParserBackend::rule;
  cfg.options.sms = parse_sms_mode(a.sms);
  cfg.options.preview_steps = a.steps;
  cfg.checkpoint = a.checkpoint;
  cfg.registry = a.registry;
  cfg.critics = a.critics;
  auto svc = EditService::open(cfg);
  svc->serve(a.host, a.port);
  return kOk;
}

void add_common(CLI::App* app, Common& c, bool with_out = true) {
  app->add_option("--config", c.config, "JSON run configuration overlaying the defaults")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Overrides the command's seed");
  if (with_out) {
    app->add_option("--out", c.out, "Output directory")->required();
    app->add_flag("--force", c.force, "Overwrite an existing run");
  }
}

void add_eval(CLI::App* app, EvalArgs& a) {
  app->add_option("--checkpoint", a.checkpoint, "DAE checkpoint directory")->required();
  app->add_option("--critics", a.critics, "Critic directory")->required();
  app->add_option("--mapper", a.mapper, "Mapper directory")->required();
  app->add_option("--strength", a.strength, "Edit strength")->check(CLI::Range(0.0, 1.0));
  app->add_option("--steps", a.steps, "Sampling steps")->check(CLI::Range(1, 1000));
  app->add_option("--sms", a.sms, "on, off or flipped")->check(CLI::IsMember({"on", "off", "flipped"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semedit: chat-driven semantic editing with a diffusion autoencoder"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log training progress");

  Common common;
  int gen_n = 0;
  auto* gen = app.add_subcommand("gen-data", "Render a synthetic face dataset");
  add_common(gen, common);
  gen->add_option("--n", gen_n, "Number of faces (default from config)");

  std::string data_dir;
  std::optional<long> iterations;
  auto* tdae = app.add_subcommand("train-dae", "Train the diffusion autoencoder");
  add_common(tdae, common);
  tdae->add_option("--data", data_dir, "Dataset directory (default: render from config)")->check(CLI::ExistingDirectory);
  tdae->add_option("--iterations", iterations, "Training iterations");

  auto* tcrit = app.add_subcommand("train-critics", "Train the oracle, direction and identity critics");
  add_common(tcrit, common);

  std::string checkpoint, critics_dir, attribute, registry;
  auto* tmap = app.add_subcommand("train-mapper", "Train one attribute mapper");
  add_common(tmap, common);
  tmap->add_option("--checkpoint", checkpoint, "DAE checkpoint directory")->required();
  tmap->add_option("--critics", critics_dir, "Critic directory")->required();
  tmap->add_option("--attribute", attribute, "Attribute name or alias")->required();
  tmap->add_option("--registry", registry, "Registry file (default: built-in)");
  tmap->add_option("--iterations", iterations, "Training iterations");

  auto* wreg = app.add_subcommand("write-registry", "Write the default mapper registry");
  add_common(wreg, common);

  EditArgs edit_args;
  auto* edit = app.add_subcommand("edit", "Edit one image from a chat utterance");
  add_common(edit, common);
  edit->add_option("--image", edit_args.image, "Source PNG")->required()->check(CLI::ExistingFile);
  edit->add_option("--text", edit_args.text, "Edit request")->required();
  edit->add_option("--checkpoint", edit_args.checkpoint, "DAE checkpoint directory")->required();
  edit->add_option("--registry", edit_args.registry, "Registry file")->required()->check(CLI::ExistingFile);
  edit->add_option("--critics", edit_args.critics, "Critic directory; enables the metric report");
  edit->add_option("--strength", edit_args.strength, "Overrides every task strength");
  edit->add_option("--steps", edit_args.steps, "Overrides every task's sampling steps");
  edit->add_option("--sms", edit_args.sms, "on, off or flipped")->check(CLI::IsMember({"on", "off", "flipped"}));
  edit->add_option("--backend", edit_args.backend, "rule or llm")->check(CLI::IsMember({"rule", "llm"}));

  EvalArgs eval_args;
  auto* ablate = app.add_subcommand("ablate-sms", "Compare SMS on and off on the evaluation set");
  add_common(ablate, common);
  add_eval(ablate, eval_args);
  auto* sweep_t = app.add_subcommand("sweep-T", "Reconstruction and edit metrics over sampling steps");
  add_common(sweep_t, common);
  add_eval(sweep_t, eval_args);
  sweep_t->add_option("--values", eval_args.values, "Comma-separated step counts (default from config)");
  auto* sweep_s = app.add_subcommand("sweep-s", "Edit metrics over strengths");
  add_common(sweep_s, common);
  add_eval(sweep_s, eval_args);
  sweep_s->add_option("--values", eval_args.values, "Comma-separated strengths (default from config)");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the HTTP edit service");
  serve->add_option("--root", serve_args.root, "Session storage directory")->required();
  serve->add_option("--checkpoint", serve_args.checkpoint, "DAE checkpoint directory")->required();
  serve->add_option("--registry", serve_args.registry, "Registry file")->required()->check(CLI::ExistingFile);
  serve->add_option("--critics", serve_args.critics, "Critic directory; enables turn metrics");
  serve->add_option("--host", serve_args.host, "Bind address");
  serve->add_option("--port", serve_args.port, "Port");
  serve->add_option("--steps", serve_args.steps, "Preview sampling steps")->check(CLI::Range(kMinTimeSteps, kMaxTimeSteps));
  serve->add_option("--sms", serve_args.sms, "on, off or flipped")->check(CLI::IsMember({"on", "off", "flipped"}));
  serve->add_option("--backend", serve_args.backend, "rule or llm")->check(CLI::IsMember({"rule", "llm"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every other parse failure is a usage error.
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  log::set_level(verbose ? log::Level::info : log::Level::warning);

  try {
    if (*gen) return cmd_gen_data(common, gen_n);
    if (*tdae) return cmd_train_dae(common, data_dir, iterations);
    if (*tcrit) return cmd_train_critics(common);
    if (*tmap) return cmd_train_mapper(common, checkpoint, critics_dir, attribute, registry, iterations);
    if (*wreg) return cmd_write_registry(common);
    if (*edit) return cmd_edit(common, edit_args);
    if (*ablate) return cmd_ablate_sms(common, eval_args);
    if (*sweep_t) return cmd_sweep_T(common, eval_args);
    if (*sweep_s) return cmd_sweep_s(common, eval_args);
    if (*serve) return cmd_serve(serve_args);
  } catch (const LookupError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kLookup;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kUsage;
}
