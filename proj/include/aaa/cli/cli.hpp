#pragma once

// Command line front end: synth, fit-field, train, predict, eval, threshold.
// Errors go to stderr as one JSON object; exit codes 2 (arguments),
// 3 (data), 4 (numerics).

#include <CLI11.hpp>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "aaa/io/dataset.hpp"
#include "aaa/synth/generator.hpp"
#include "aaa/trainer/evaluation.hpp"
#include "aaa/trainer/trainer.hpp"

namespace aaa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Provenance and small helpers

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes));
}

// GROWTH_SEED wins over the seed in a config file.
inline std::uint64_t resolve_seed(std::uint64_t configured) {
  const char* env = std::getenv("GROWTH_SEED");
  if (!env || !*env) return configured;
  std::uint64_t v = 0;
  const char* end = env + std::strlen(env);
  const auto [ptr, ec] = std::from_chars(env, end, v);
  if (ec != std::errc() || ptr != end) throw InvalidArgument(std::string("GROWTH_SEED is not an integer: ") + env);
  return v;
}

inline json provenance(const std::string& command, const json& config, std::uint64_t seed) {
  return {{"command", command}, {"config_hash", hex64(fnv1a(config.dump()))}, {"seed", seed}};
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  out << text;
}

inline json read_config(const std::string& path) { return path.empty() ? json::object() : io::read_json(path); }

inline void ensure_dir(const fs::path& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw DataError("cannot create directory '" + d.string() + "': " + ec.message());
}

inline fs::path sibling(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

inline std::vector<model::GrowthModel> load_models(const std::vector<std::string>& paths) {
  if (paths.empty()) throw InvalidArgument("at least one --model checkpoint is required");
  std::vector<model::GrowthModel> out;
  for (const auto& p : paths) out.push_back(model::GrowthModel::from_records(ga::load_checkpoint(p)));
  return out;
}

inline std::vector<const model::GrowthModel*> pointers(const std::vector<model::GrowthModel>& ms) {
  std::vector<const model::GrowthModel*> out;
  for (const auto& m : ms) out.push_back(&m);
  return out;
}

inline json model_hashes(const std::vector<std::string>& paths) {
  json h = json::array();
  for (const auto& p : paths) h.push_back(file_hash(p));
  return h;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string spec, out, format = "binary";
};

inline int run_synth(const SynthArgs& a, std::ostream& out) {
  const json cfg = io::read_json(a.spec);
  const auto format = a.format == "ascii" ? surface::PlyFormat::ascii : surface::PlyFormat::binary;
  std::vector<synth::PatientSpec> specs;
  std::vector<std::string> train, holdout;
  std::uint64_t seed = 0;
  try {
    if (cfg.contains("patients")) {
      seed = resolve_seed(0);
      std::set<std::string> hold;
      for (const auto& id : cfg.value("holdout", std::vector<std::string>{})) hold.insert(id);
      for (const auto& pj : cfg.at("patients")) {
        auto s = synth::patient_spec_from_json(pj);
        s.seed += seed;
        (hold.count(s.id) ? holdout : train).push_back(s.id);
        specs.push_back(std::move(s));
      }
    } else {
      synth::CohortSpec c;
      c.seed = resolve_seed(cfg.value("seed", c.seed));
      c.train = cfg.value("train", c.train);
      c.holdout = cfg.value("holdout", c.holdout);
      c.edge_length = cfg.value("edge_length", c.edge_length);
      c.noise = cfg.value("noise", c.noise);
      seed = c.seed;
      if (c.train + c.holdout == 0) throw InvalidArgument("cohort: no patients requested");
      specs = synth::make_cohort(c);
      for (std::size_t i = 0; i < specs.size(); ++i) (i < c.train ? train : holdout).push_back(specs[i].id);
      // Outside the split: the threshold-crossing example.
      if (cfg.value("threshold_case", false)) specs.push_back(synth::threshold_case(99, c.edge_length));
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("synth spec: ") + e.what());
  }

  const fs::path root(a.out);
  ensure_dir(root);
  io::Manifest all;
  all.base = root;
  all.train = train;
  all.holdout = holdout;
  json spec_list = json::array();
  for (const auto& s : specs) {
    s.validate();
    const fs::path dir = root / s.id;
    ensure_dir(dir);
    io::PatientEntry entry;
    entry.id = s.id;
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      const auto snap = synth::generate_snapshot(s, k);
      const std::string stem = "t" + std::to_string(k);
      surface::write_ply((dir / (stem + ".ply")).string(), snap.model.mesh, snap.model.features, format);
      surface::write_centerline((dir / (stem + "_centerline.json")).string(), snap.model.centerline);
      entry.snapshots.push_back({s.id + "/" + stem + ".ply", s.id + "/" + stem + "_centerline.json", s.times[k]});
    }
    io::write_json(dir / "spec.json", synth::to_json(s));
    io::Manifest one;
    one.base = root;
    one.patients = {entry};
    if (std::find(holdout.begin(), holdout.end(), s.id) != holdout.end()) one.holdout = {s.id};
    else if (std::find(train.begin(), train.end(), s.id) != train.end()) one.train = {s.id};
    io::write_manifest(dir / "manifest.json", one);
    all.patients.push_back(std::move(entry));
    spec_list.push_back(synth::to_json(s));
  }
  io::write_manifest(root / "manifest.json", all);
  const json report = {{"patients", specs.size()},
                       {"manifest", (root / "manifest.json").generic_string()},
                       {"provenance", provenance("synth", spec_list, seed)}};
  io::write_json(root / "synth_report.json", report);
  out << report.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// fit-field

struct FitArgs {
  std::string data, config, out, split = "all";
  std::size_t threads = 1;
};

inline int run_fit(const FitArgs& a, std::ostream& out) {
  auto manifest = io::read_manifest(a.data);
  auto cfg = temporal::fit_config_from_json(read_config(a.config));
  cfg.seed = resolve_seed(cfg.seed);
  const auto selected = manifest.split(a.split);
  std::vector<temporal::PatientTimeline> tls;
  for (const auto* p : selected) tls.push_back(io::load_timeline(manifest, *p, false));
  const auto results = temporal::fit_all(tls, cfg, a.threads);

  const fs::path root(a.out);
  ensure_dir(root);
  json patients = json::array();
  for (std::size_t i = 0; i < tls.size(); ++i) {
    const auto& r = results[i];
    const fs::path ckpt = root / (tls[i].id + ".field");
    ga::save_checkpoint(ckpt.string(), ga::to_records(r.field.params()));
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < r.loss.size(); ++e) csv += std::to_string(e) + "," + num(r.loss[e]) + "\n";
    write_text(root / (tls[i].id + "_loss.csv"), csv);
    for (auto& p : manifest.patients) {
      if (p.id == tls[i].id) p.field = fs::absolute(ckpt).string();
    }
    patients.push_back({{"id", tls[i].id}, {"residual", r.residual}, {"warnings", r.warnings}});
  }
  io::write_manifest(root / "manifest.json", manifest);
  const json report = {{"patients", patients},
                       {"config", temporal::to_json(cfg)},
                       {"provenance", provenance("fit-field", temporal::to_json(cfg), cfg.seed)}};
  io::write_json(root / "fit_report.json", report);
  out << json{{"fitted", tls.size()}, {"manifest", (root / "manifest.json").generic_string()}}.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data, config, out, split = "train";
};

inline int run_train(const TrainArgs& a, std::ostream& out) {
  const json raw = read_config(a.config);
  json tcfg = raw;
  tcfg.erase("model");
  auto cfg = trainer::train_config_from_json(tcfg);
  cfg.seed = resolve_seed(cfg.seed);
  const auto mcfg = model::model_config_from_json(raw.value("model", json::object()));
  const auto manifest = io::read_manifest(a.data);
  const auto data = io::load_split(manifest, a.split, cfg.augmentation);
  if (data.empty()) throw DataError("split '" + a.split + "' is empty");

  std::string csv = "epoch,loss\n";
  const auto result = trainer::train(data, cfg, mcfg, [&](std::size_t e, double l) {
    csv += std::to_string(e) + "," + num(l) + "\n";
  });
  const fs::path ckpt(a.out);
  if (ckpt.has_parent_path()) ensure_dir(ckpt.parent_path());
  ga::save_checkpoint(ckpt.string(), result.model.to_records());
  write_text(sibling(ckpt, ".loss.csv"), csv);
  const json config = {{"train", trainer::to_json(cfg)}, {"model", model::to_json(result.model.config())}};
  const json sidecar = {{"config", config},
                        {"patients", data.size()},
                        {"final_loss", result.loss.back()},
                        {"provenance", provenance("train", config, cfg.seed)}};
  io::write_json(sibling(ckpt, ".json"), sidecar);
  out << json{{"checkpoint", ckpt.generic_string()}, {"final_loss", result.loss.back()}}.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::vector<std::string> models;
  std::string input, centerline, out, reference, reference_centerline, report, profile;
  double dt = 0.0;
};

inline int run_predict(const PredictArgs& a, std::ostream& out) {
  if (a.reference.empty() != a.reference_centerline.empty()) {
    throw InvalidArgument("--reference and --reference-centerline go together");
  }
  const auto models = load_models(a.models);
  const auto input = io::load_snapshot(a.input, a.centerline, 0.0);
  const auto disp = trainer::ensemble_predict(pointers(models), input, a.dt);
  const auto pred = model::deform(input.mesh, disp);
  surface::write_ply(a.out, pred, {});

  const json config = {{"dt", a.dt}, {"models", model_hashes(a.models)}, {"input", file_hash(a.input)}};
  const auto prof_in = surface::max_diameter(input);
  const auto prof_pred = surface::max_diameter(pred, input.centerline);
  json report = {{"dt", a.dt},
                 {"in_distribution", model::in_distribution(models.front(), a.dt)},
                 {"input_max_diameter", prof_in.max},
                 {"predicted_max_diameter", prof_pred.max},
                 {"provenance", provenance("predict", config, models.front().config().seed)}};
  std::optional<surface::DiameterProfile> prof_ref;
  if (!a.reference.empty()) {
    const auto ref = io::load_snapshot(a.reference, a.reference_centerline, a.dt);
    temporal::PatientTimeline holder;
    holder.id = fs::path(a.input).stem().string();
    holder.models = {input};
    const auto m = trainer::score({&holder, 0, a.dt, ref}, disp, surface::Region::infrarenal);
    report["chamfer"] = m.chamfer;
    report["hd95"] = m.hd95;
    report["diameter_error"] = m.diameter_error;
    report["rgvd"] = m.rgvd ? json(*m.rgvd) : json(nullptr);
    report["pred_growth"] = m.pred_growth;
    report["ref_growth"] = m.ref_growth;
    prof_ref = surface::max_diameter(ref.mesh, input.centerline);
  }
  if (!a.report.empty()) io::write_json(a.report, report);
  if (!a.profile.empty()) {
    std::string csv = prof_ref ? "arclength,input,predicted,reference\n" : "arclength,input,predicted\n";
    for (std::size_t i = 0; i < prof_in.arclength.size(); ++i) {
      csv += num(prof_in.arclength[i]) + "," + num(prof_in.diameter[i]) + "," + num(prof_pred.diameter[i]);
      if (prof_ref) csv += "," + num(prof_ref->diameter[i]);
      csv += "\n";
    }
    write_text(a.profile, csv);
  }
  out << report.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string data, split = "holdout", predictor = "model", out, region = "infrarenal";
  std::vector<std::string> models;
  std::vector<double> sweep;
  std::size_t threads = 1;
};

inline int run_eval(const EvalArgs& a, std::ostream& out) {
  const auto region = surface::parse_region(a.region);
  const auto manifest = io::read_manifest(a.data);
  const bool need_field = a.predictor == "hist" || !a.sweep.empty();
  std::vector<model::GrowthModel> models;
  trainer::Predictor predictor;
  json config = {{"predictor", a.predictor}, {"split", a.split}, {"region", a.region}, {"sweep", a.sweep}};
  std::uint64_t seed = 0;
  if (a.predictor == "zero") {
    predictor = trainer::zero_predictor();
  } else if (a.predictor == "hist") {
    predictor = trainer::hist_predictor();
  } else if (a.predictor == "model") {
    models = load_models(a.models);
    predictor = trainer::ensemble_predictor(pointers(models));
    config["models"] = model_hashes(a.models);
    seed = models.front().config().seed;
  } else {
    throw InvalidArgument("unknown predictor '" + a.predictor + "' (model, zero, hist)");
  }
  const auto data = io::load_split(manifest, a.split, need_field);
  if (data.empty()) throw DataError("split '" + a.split + "' is empty");
  const auto report = trainer::evaluate(predictor, data, region, a.threads);

  const fs::path root(a.out);
  ensure_dir(root);
  std::string rows;
  for (const auto& r : report.rows) rows += trainer::to_json(r).dump() + "\n";
  write_text(root / "metrics.jsonl", rows);
  const json aggregate = {{"metrics", trainer::aggregate_json(report)},
                          {"cases", report.rows.size()},
                          {"provenance", provenance("eval", config, seed)}};
  io::write_json(root / "aggregate.json", aggregate);

  // Error against Δt with interpolated shapes as targets.
  if (!a.sweep.empty()) {
    std::vector<temporal::ShapeInterpolator> interps;
    for (const auto& tl : data) interps.emplace_back(tl);
    std::string csv = "dt,cases,diameter_error_median,diameter_error_q1,diameter_error_q3,hd95_median,chamfer_median\n";
    for (double dt : a.sweep) {
      if (!(dt > 0.0)) throw InvalidArgument("sweep steps must be positive");
      std::vector<trainer::EvalCase> cases;
      for (std::size_t p = 0; p < data.size(); ++p) {
        const auto& tl = data[p];
        for (std::size_t i = 1; i + 1 < tl.models.size(); ++i) {
          const double t = tl.models[i].time + dt;
          if (t > tl.end() + temporal::kTimeTolerance) continue;
          surface::VascularModel target;
          target.mesh = interps[p].shape(t);
          target.centerline = tl.models[i].centerline;
          target.time = t;
          cases.push_back({&tl, i, dt, std::move(target)});
        }
      }
      csv += num(dt) + "," + std::to_string(cases.size());
      if (cases.empty()) {
        csv += ",,,,,\n";
        continue;
      }
      const auto r = trainer::evaluate_cases(predictor, cases, region, a.threads);
      const auto& d = r.aggregate.at("diameter_error");
      csv += "," + num(d.median) + "," + num(d.q1) + "," + num(d.q3) + "," + num(r.aggregate.at("hd95").median) + "," +
             num(r.aggregate.at("chamfer").median) + "\n";
    }
    write_text(root / "error_vs_dt.csv", csv);
  }
  out << aggregate.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// threshold

struct ThresholdArgs {
  std::vector<std::string> models;
  std::string input, centerline, csv;
  double threshold = 55.0;
  int horizon = 24;
};

inline int run_threshold(const ThresholdArgs& a, std::ostream& out) {
  const auto models = load_models(a.models);
  const auto ptrs = pointers(models);
  const auto input = io::load_snapshot(a.input, a.centerline, 0.0);
  const auto r = trainer::predict_threshold_crossing(
      [&](double dt) { return trainer::ensemble_predict(ptrs, input, dt); }, input, a.threshold, a.horizon);
  const json config = {{"threshold", a.threshold},
                       {"horizon", a.horizon},
                       {"models", model_hashes(a.models)},
                       {"input", file_hash(a.input)}};
  const json report = {{"crosses", r.crosses},
                       {"month", r.month ? json(*r.month) : json(nullptr)},
                       {"threshold_mm", a.threshold},
                       {"horizon_months", a.horizon},
                       {"input_max_diameter", surface::max_diameter(input).max},
                       {"diameters", r.diameters},
                       {"provenance", provenance("threshold", config, models.front().config().seed)}};
  if (!a.csv.empty()) {
    std::string csv = "month,max_diameter\n";
    for (std::size_t k = 0; k < r.diameters.size(); ++k) csv += std::to_string(k + 1) + "," + num(r.diameters[k]) + "\n";
    write_text(a.csv, csv);
  }
  out << report.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

inline void report_error(std::ostream& err, const std::string& type, int code, const std::string& message) {
  err << json{{"error", {{"type", type}, {"code", code}, {"message", message}}}}.dump() << '\n';
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Time-conditioned growth prediction for vascular surface meshes", "aaa-growth"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic longitudinal cohort");
  synth->add_option("--spec", sa.spec, "Cohort or patient-list JSON")->required();
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--format", sa.format, "PLY encoding")->check(CLI::IsMember({"binary", "ascii"}));

  FitArgs fa;
  auto* fit = app.add_subcommand("fit-field", "Fit per-patient velocity fields");
  fit->add_option("--data", fa.data, "Manifest JSON")->required();
  fit->add_option("--config", fa.config, "Fit config JSON");
  fit->add_option("--out", fa.out, "Output directory")->required();
  fit->add_option("--split", fa.split, "train, holdout or all");
  fit->add_option("--threads", fa.threads, "Worker threads")->check(CLI::PositiveNumber);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the growth model");
  tr->add_option("--data", ta.data, "Manifest JSON with fitted fields")->required();
  tr->add_option("--config", ta.config, "Train config JSON (optional \"model\" section)");
  tr->add_option("--out", ta.out, "Checkpoint path")->required();
  tr->add_option("--split", ta.split, "train, holdout or all");

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Deform one surface by dt years");
  pr->add_option("--model", pa.models, "Checkpoint(s); several form an ensemble")->required();
  pr->add_option("--input", pa.input, "Input PLY with features")->required();
  pr->add_option("--centerline", pa.centerline, "Input centerline JSON")->required();
  pr->add_option("--dt", pa.dt, "Time step in years")->required();
  pr->add_option("--out", pa.out, "Predicted PLY")->required();
  pr->add_option("--reference", pa.reference, "Observed PLY at t + dt");
  pr->add_option("--reference-centerline", pa.reference_centerline, "Its centerline JSON");
  pr->add_option("--report", pa.report, "Report JSON path");
  pr->add_option("--profile", pa.profile, "Diameter profile CSV path");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score a predictor on observed pairs");
  ev->add_option("--data", ea.data, "Manifest JSON")->required();
  ev->add_option("--split", ea.split, "train, holdout or all");
  ev->add_option("--predictor", ea.predictor, "model, zero or hist");
  ev->add_option("--model", ea.models, "Checkpoint(s) for predictor=model");
  ev->add_option("--out", ea.out, "Output directory")->required();
  ev->add_option("--region", ea.region, "Evaluation region");
  ev->add_option("--sweep", ea.sweep, "Comma separated dt values (years) for error_vs_dt.csv")->delimiter(',');
  ev->add_option("--threads", ea.threads, "Worker threads")->check(CLI::PositiveNumber);

  ThresholdArgs ha;
  auto* th = app.add_subcommand("threshold", "Month at which the max diameter crosses a threshold");
  th->add_option("--model", ha.models, "Checkpoint(s); several form an ensemble")->required();
  th->add_option("--input", ha.input, "Input PLY with features")->required();
  th->add_option("--centerline", ha.centerline, "Input centerline JSON")->required();
  th->add_option("--threshold", ha.threshold, "Diameter threshold in mm");
  th->add_option("--horizon", ha.horizon, "Months to roll out")->check(CLI::PositiveNumber);
  th->add_option("--csv", ha.csv, "Monthly diameter CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << app.help();
    report_error(err, "invalid_argument", 2, e.what());
    return 2;
  }

  try {
    if (*synth) return run_synth(sa, out);
    if (*fit) return run_fit(fa, out);
    if (*tr) return run_train(ta, out);
    if (*pr) return run_predict(pa, out);
    if (*ev) return run_eval(ea, out);
    if (*th) return run_threshold(ha, out);
  } catch (const InvalidArgument& e) {
    report_error(err, "invalid_argument", 2, e.what());
    return 2;
  } catch (const DataError& e) {
    report_error(err, "data_error", 3, e.what());
    return 3;
  } catch (const NumericalError& e) {
    report_error(err, "numerical_error", 4, e.what());
    return 4;
  } catch (const fs::filesystem_error& e) {
    report_error(err, "data_error", 3, e.what());
    return 3;
  } catch (const std::exception& e) {
    report_error(err, "internal_error", 1, e.what());
    return 1;
  }
  return 2;
}

}  // namespace aaa::cli
