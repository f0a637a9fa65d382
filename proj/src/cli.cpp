#include "annoclean/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "annoclean/checkpoint.hpp"
#include "annoclean/config.hpp"
#include "annoclean/error.hpp"
#include "annoclean/evaluate.hpp"
#include "annoclean/losscurves.hpp"

namespace annoclean {

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::string config;
  std::string seed;
  bool force = false;
  std::string out;
};

std::optional<std::uint64_t> resolve_seed(const GlobalFlags& g) {
  if (!g.seed.empty()) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(g.seed, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != g.seed.size() || g.seed[0] == '-' ||
        v > static_cast<unsigned long long>(std::numeric_limits<std::int64_t>::max())) {
      throw ConfigError("--seed '" + g.seed + "' is not an integer in [0, 2^63)");
    }
    return v;
  }
  return seed_from_env();
}

ExperimentConfig require_config(const GlobalFlags& g) {
  if (g.config.empty()) {
    throw ConfigError("a config file is required (-c/--config)");
  }
  return load_config(g.config);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) {
    throw Error("cannot write " + path.string());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------- synth

int cmd_synth(const GlobalFlags& g, std::ostream& out) {
  ExperimentConfig cfg = require_config(g);
  if (auto seed = resolve_seed(g)) {
    cfg.dataset.seed = *seed;
  }
  if (!g.out.empty()) {
    cfg.dataset.out = fs::absolute(g.out);
  }
  BuildOptions options;
  options.fractions = cfg.dataset.fractions;
  options.overwrite = g.force;
  if (cfg.dataset.stamp_dir) {
    options.library = load_stamp_library(*cfg.dataset.stamp_dir, kAllAnnotationKinds);
  }

  fs::path clean_dir;
  std::optional<fs::path> scratch;
  if (cfg.dataset.clean_dir) {
    clean_dir = *cfg.dataset.clean_dir;
    if (!fs::is_directory(clean_dir)) {
      throw ConfigError("clean image directory not found: " + clean_dir.string());
    }
  } else {
    scratch = fs::temp_directory_path() /
              ("annoclean-procedural-" +
               std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    fs::create_directories(*scratch);
    const auto frames = procedural_clean_images(cfg.dataset.procedural_count,
                                                cfg.dataset.procedural_dims, cfg.dataset.seed);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "procedural_%04zu.png", i);
      write_png(*scratch / name, frames[i]);
    }
    clean_dir = *scratch;
  }

  DatasetManifest manifest;
  try {
    manifest = build_dataset(clean_dir, cfg.dataset.kind, cfg.dataset.n_pairs, cfg.dataset.seed,
                             cfg.dataset.out, options);
  } catch (...) {
    if (scratch) {
      fs::remove_all(*scratch);
    }
    throw;
  }
  if (scratch) {
    fs::remove_all(*scratch);
  }

  out << "manifest: " << (cfg.dataset.out / kManifestFileName).string() << "\n";
  out << "records: " << manifest.records.size() << "  kind: " << to_string(manifest.annotation_kind)
      << "  dims: " << to_string(manifest.image_dims) << "  seed: " << manifest.master_seed << "\n";
  for (const char* name : kSplitNames) {
    out << "  " << name << ": " << manifest.split_records(name).size() << "\n";
  }
  const auto& s = manifest.channel_stats;
  out << "channel mean: " << s.mean[0] << " " << s.mean[1] << " " << s.mean[2]
      << "  std: " << s.std[0] << " " << s.std[1] << " " << s.std[2] << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  std::string run_id;
  bool resume = false;
};

std::string cell_snapshot(const ExperimentConfig& cfg, const RunCell& cell) {
  ExperimentConfig snap = cfg;
  snap.train = cell.train;
  snap.matrix = {};
  return to_toml(snap);
}

void write_run_status(const fs::path& run_dir, const std::string& run_id, const std::string& status,
                      const std::string& detail) {
  nlohmann::json j = {{"run_id", run_id}, {"status", status}};
  if (!detail.empty()) {
    j["detail"] = detail;
  }
  write_text(run_dir / "run.json", j.dump(2) + "\n");
}

int cmd_train(const GlobalFlags& g, const TrainFlags& t, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = require_config(g);
  if (auto seed = resolve_seed(g)) {
    cfg.train.seed = *seed;
  }
  if (!g.out.empty()) {
    cfg.runs_dir = fs::absolute(g.out);
  }
  cfg.train.validate();
  std::vector<RunCell> cells = expand_matrix(cfg);
  if (!t.run_id.empty()) {
    if (cells.size() != 1) {
      throw ConfigError("--run-id needs a single-cell matrix, got " +
                        std::to_string(cells.size()) + " cells");
    }
    cells[0].run_id = t.run_id;
  }
  for (const auto& cell : cells) {
    cell.train.validate();
  }
  const DatasetManifest manifest = load_manifest(cfg.manifest_path());
  manifest.split_records(cfg.train.split);

  // Settle every collision before any cell starts training.
  for (const auto& cell : cells) {
    const fs::path run_dir = cfg.runs_dir / cell.run_id;
    if (!fs::exists(run_dir)) {
      continue;
    }
    if (t.resume) {
      const fs::path snap = run_dir / "config.toml";
      if (!fs::exists(snap) || read_text(snap) != cell_snapshot(cfg, cell)) {
        throw CollisionError("run '" + cell.run_id +
                             "' exists with a different configuration; cannot resume");
      }
    } else if (g.force) {
      fs::remove_all(run_dir);
    } else {
      throw CollisionError("run directory already exists: " + run_dir.string() +
                           " (use --resume or --force)");
    }
  }

  int failures = 0;
  for (const auto& cell : cells) {
    const fs::path run_dir = cfg.runs_dir / cell.run_id;
    fs::create_directories(run_dir);
    write_text(run_dir / "config.toml", cell_snapshot(cfg, cell));

    TrainOptions options;
    options.checkpoint_dir = run_dir;
    TrainedModel model;
    if (const auto last = t.resume ? latest_checkpoint(run_dir) : std::nullopt) {
      Checkpoint ckpt = load_checkpoint(*last);
      if (!ckpt.resume || !ckpt.optimizer) {
        throw ConfigError("checkpoint has no resume state: " + last->string());
      }
      if (ckpt.resume->epochs_completed >= cell.train.epochs) {
        out << cell.run_id << ": already complete (" << ckpt.resume->epochs_completed
            << " epochs)\n";
        continue;
      }
      out << cell.run_id << ": resuming after epoch " << ckpt.resume->epochs_completed << "\n";
      model = std::move(ckpt.model);
      options.resume = std::move(ckpt.resume);
      options.optimizer_state = std::move(ckpt.optimizer);
    } else {
      model = build_model(cfg.model, cell.train.seed);
    }

    options.on_epoch_end = [&](int epoch, const LossCurve& curve) {
      write_loss_csv(curve, run_dir / "loss.csv");
      out << cell.run_id << ": epoch " << epoch << "/" << cell.train.epochs
          << "  loss " << (curve.steps.empty() ? 0.0 : curve.steps.back().loss) << "\n";
      out.flush();
    };
    write_run_status(run_dir, cell.run_id, "running", "");
    try {
      TrainOutcome result = train(std::move(model), manifest, cell.train, options);
      write_loss_csv(result.curve, run_dir / "loss.csv");
      write_run_status(run_dir, cell.run_id, "complete", "");
      out << cell.run_id << ": done -> " << (run_dir / "loss.csv").string() << "\n";
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      ++failures;
      write_run_status(run_dir, cell.run_id, "failed", e.what());
      err << cell.run_id << ": failed: " << e.what() << "\n";
    }
  }
  return failures == 0 ? 0 : static_cast<int>(ExitCode::kRuntimeFailure);
}

// ---------------------------------------------------------------- eval / compare

struct EvalFlags {
  std::vector<std::string> checkpoints;
  std::string manifest;
  std::string split;
  double tau = 0.0;
  bool oracle = false;
  bool identity = false;
};

/// Accepts a checkpoint file or a run directory (latest checkpoint).
fs::path checkpoint_path(const std::string& arg) {
  const fs::path p(arg);
  if (fs::is_directory(p)) {
    if (auto last = latest_checkpoint(p)) {
      return *last;
    }
    throw ConfigError("no checkpoints in run directory " + p.string());
  }
  if (!fs::exists(p)) {
    throw ConfigError("checkpoint not found: " + p.string());
  }
  return p;
}

/// The run-directory snapshot next to a checkpoint, or the -c config.
std::optional<ExperimentConfig> eval_config(const GlobalFlags& g, const fs::path& ckpt) {
  if (!g.config.empty()) {
    return load_config(g.config);
  }
  const fs::path snap = ckpt.parent_path() / "config.toml";
  if (!ckpt.empty() && fs::exists(snap)) {
    return load_config(snap);
  }
  return std::nullopt;
}

struct EvalContext {
  DatasetManifest manifest;
  std::string split;
  double tau = kDefaultTau;
  SsimParams ssim;
};

EvalContext eval_context(const GlobalFlags& g, const EvalFlags& e, const fs::path& first_ckpt) {
  const auto cfg = eval_config(g, first_ckpt);
  EvalContext ctx;
  fs::path manifest_path;
  if (!e.manifest.empty()) {
    manifest_path = e.manifest;
  } else if (cfg) {
    manifest_path = cfg->manifest_path();
  } else {
    throw ConfigError("no manifest: pass --manifest or -c/--config");
  }
  ctx.manifest = load_manifest(manifest_path);
  ctx.split = !e.split.empty() ? e.split : (cfg ? cfg->eval.split : "test");
  ctx.tau = e.tau > 0.0 ? e.tau : (cfg ? cfg->eval.tau : kDefaultTau);
  if (cfg) {
    ctx.ssim = cfg->eval.ssim;
  }
  ctx.manifest.split_records(ctx.split);
  return ctx;
}

void emit_reports(std::vector<MetricReport>& reports, const fs::path& out_dir,
                  const std::string& stem, std::ostream& out) {
  // Disambiguate identical row labels in comparisons.
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (std::size_t j = 0; j < reports.size(); ++j) {
      if (i != j && reports[i].method == reports[j].method &&
          reports[i].training_mode == reports[j].training_mode) {
        for (std::size_t k = 0; k < reports.size(); ++k) {
          reports[k].training_mode += " #" + std::to_string(k + 1);
        }
        i = reports.size();
        break;
      }
    }
  }
  fs::create_directories(out_dir);
  const std::string table = format_report_table(reports);
  write_text(out_dir / (stem + ".txt"), table);
  write_comparison_csv(reports, out_dir / (stem + ".csv"));
  if (reports.size() == 1) {
    write_report_csv(reports[0], out_dir / (stem + "_metrics.csv"));
    write_record_csv(reports[0], out_dir / (stem + "_records.csv"));
  }
  out << table;
  for (const auto& r : reports) {
    out << r.training_mode << ": n=" << r.n_samples << " fingerprint " << r.fingerprint << "\n";
  }
  out << "written: " << (out_dir / (stem + ".txt")).string() << "\n";
}

int cmd_eval(const GlobalFlags& g, const EvalFlags& e, std::ostream& out) {
  if (e.oracle && e.identity) {
    throw ConfigError("--oracle and --identity are exclusive");
  }
  const bool stub = e.oracle || e.identity;
  if (!stub && e.checkpoints.size() != 1) {
    throw ConfigError("eval takes exactly one checkpoint (use compare for several)");
  }
  const fs::path ckpt = stub ? fs::path() : checkpoint_path(e.checkpoints[0]);
  const EvalContext ctx = eval_context(g, e, ckpt);

  std::vector<MetricReport> reports;
  fs::path out_dir;
  if (stub) {
    if (e.oracle) {
      PerfectRestorer restorer;
      reports.push_back(evaluate(restorer, ctx.manifest, ctx.split, ctx.tau, ctx.ssim));
      reports.back().method = "Perfect restoration";
      reports.back().training_mode = "oracle";
    } else {
      IdentityRestorer restorer;
      reports.push_back(evaluate(restorer, ctx.manifest, ctx.split, ctx.tau, ctx.ssim));
      reports.back().method = "No restoration";
      reports.back().training_mode = "identity";
    }
    out_dir = g.out.empty() ? fs::current_path() : fs::path(g.out);
  } else {
    Checkpoint loaded = load_checkpoint(ckpt);
    reports.push_back(evaluate(loaded.model, ctx.manifest, ctx.split, ctx.tau, ctx.ssim));
    out_dir = g.out.empty() ? ckpt.parent_path() : fs::path(g.out);
  }
  emit_reports(reports, out_dir, "report", out);
  return 0;
}

int cmd_compare(const GlobalFlags& g, const EvalFlags& e, std::ostream& out) {
  if (e.checkpoints.size() < 2) {
    throw ConfigError("compare needs at least two checkpoints");
  }
  std::vector<fs::path> ckpts;
  for (const auto& c : e.checkpoints) {
    ckpts.push_back(checkpoint_path(c));
  }
  const EvalContext ctx = eval_context(g, e, ckpts[0]);
  std::vector<MetricReport> reports;
  for (const auto& c : ckpts) {
    Checkpoint loaded = load_checkpoint(c);
    reports.push_back(evaluate(loaded.model, ctx.manifest, ctx.split, ctx.tau, ctx.ssim));
  }
  emit_reports(reports, g.out.empty() ? fs::current_path() : fs::path(g.out), "compare", out);
  return 0;
}

// ---------------------------------------------------------------- losscurves

struct CurveFlags {
  std::vector<std::string> runs;
  std::string runs_dir;
  std::size_t window = 50;
  double rel_eps = 0.05;
  std::size_t smoothing = 20;
};

int cmd_losscurves(const GlobalFlags& g, const CurveFlags& c, std::ostream& out) {
  if (c.runs.empty()) {
    throw ConfigError("losscurves needs at least one run id");
  }
  fs::path runs_dir = "runs";
  if (!c.runs_dir.empty()) {
    runs_dir = c.runs_dir;
  } else if (!g.config.empty()) {
    runs_dir = load_config(g.config).runs_dir;
  }
  std::vector<NamedCurve> curves;
  for (const auto& id : c.runs) {
    const fs::path run_dir = fs::is_directory(id) ? fs::path(id) : runs_dir / id;
    const fs::path csv = run_dir / "loss.csv";
    if (!fs::exists(csv)) {
      throw ConfigError("missing loss CSV for run '" + id + "': " + csv.string());
    }
    NamedCurve nc;
    nc.label = run_dir.filename().string();
    nc.loss = load_config(run_dir / "config.toml").train.loss;
    nc.curve = read_loss_csv(csv);
    curves.push_back(std::move(nc));
  }
  const auto rows = summarize_convergence(curves, c.window, c.rel_eps);
  const fs::path out_dir = g.out.empty() ? runs_dir : fs::path(g.out);
  fs::create_directories(out_dir);
  write_convergence_csv(rows, out_dir / "convergence.csv");
  plot_loss_curves(curves, out_dir / "losscurves.png", c.smoothing);
  out << format_convergence_table(rows);
  out << "written: " << (out_dir / "convergence.csv").string() << ", "
      << (out_dir / "losscurves.png").string() << "\n";
  return 0;
}

}  // namespace

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  static const std::regex kPattern(R"(epoch_(\d+)\.ckpt)");
  std::optional<fs::path> best;
  long best_epoch = -1;
  if (!fs::is_directory(run_dir)) {
    return best;
  }
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, kPattern)) {
      const long epoch = std::stol(m[1].str());
      if (epoch > best_epoch) {
        best_epoch = epoch;
        best = entry.path();
      }
    }
  }
  return best;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Annotation removal for ultrasound frames: dataset synthesis, training, evaluation",
               "annoclean"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("-c,--config", g.config, "Experiment config (TOML)");
  app.add_option("--seed", g.seed, "Master seed (overrides ANNOCLEAN_SEED and the config)");
  app.add_flag("--force", g.force, "Overwrite existing outputs");
  app.add_option("--out", g.out, "Output location");

  auto* synth = app.add_subcommand("synth", "Build a synthetic dataset and manifest");

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train one run per matrix cell");
  train_cmd->add_option("--run-id", tf.run_id, "Run id for a single-cell config");
  train_cmd->add_flag("--resume", tf.resume, "Continue from the last checkpoint of each run");

  EvalFlags ef;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  eval_cmd->add_option("checkpoint", ef.checkpoints, "Checkpoint file or run directory");
  eval_cmd->add_option("--manifest", ef.manifest, "Dataset manifest.json");
  eval_cmd->add_option("--split", ef.split, "Split name (default from config, else test)");
  eval_cmd->add_option("--tau", ef.tau, "Segmentation threshold on [0,1] scale");
  eval_cmd->add_flag("--oracle", ef.oracle, "Score the perfect restorer (output = clean)");
  eval_cmd->add_flag("--identity", ef.identity, "Score the unrestored input");

  EvalFlags cf;
  auto* compare_cmd = app.add_subcommand("compare", "Evaluate several checkpoints side by side");
  compare_cmd->add_option("checkpoints", cf.checkpoints, "Checkpoint files or run directories");
  compare_cmd->add_option("--manifest", cf.manifest, "Dataset manifest.json");
  compare_cmd->add_option("--split", cf.split, "Split name");
  compare_cmd->add_option("--tau", cf.tau, "Segmentation threshold on [0,1] scale");

  CurveFlags lf;
  auto* curves_cmd = app.add_subcommand("losscurves", "Convergence summary and loss plot");
  curves_cmd->add_option("runs", lf.runs, "Run ids or run directories");
  curves_cmd->add_option("--runs-dir", lf.runs_dir, "Directory holding the runs");
  curves_cmd->add_option("--window", lf.window, "Moving-average window")->check(CLI::PositiveNumber);
  curves_cmd->add_option("--rel-eps", lf.rel_eps, "Relative tolerance to the final average");
  curves_cmd->add_option("--smoothing", lf.smoothing, "Plot smoothing window");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return static_cast<int>(ExitCode::kInputError);
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(g, out);
    }
    if (train_cmd->parsed()) {
      return cmd_train(g, tf, out, err);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(g, ef, out);
    }
    if (compare_cmd->parsed()) {
      return cmd_compare(g, cf, out);
    }
    return cmd_losscurves(g, lf, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kRuntimeFailure);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kRuntimeFailure);
  }
}

}  // namespace annoclean
