#pragma once

// Command-line front end. Subcommands:
//
//   train   --config F [--objective K] [--seed N] [--epochs N] [--run-id ID]
//   eval    --config F --checkpoint P [--steps N] [--solver euler|rk4] [--split val|test]
//   bench   --config F --checkpoint P [--steps N] [--mode prior|e2e]
//   pareto  --config F --checkpoint P [--steps a..b] [--mode prior|e2e] [--out CSV]
//   report  --out DIR [--curves LABEL=CSV]... [--pareto CSV]... [--metric M] [--config F]
//
// Run directories live under $PRIORBENCH_RUNS (default "runs").

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "priorbench/bench.hpp"
#include "priorbench/csv.hpp"
#include "priorbench/manifest.hpp"
#include "priorbench/svg.hpp"
#include "priorbench/train.hpp"

namespace priorbench {

inline constexpr const char* kRunsEnv = "PRIORBENCH_RUNS";

inline std::filesystem::path runs_root() {
  const char* env = std::getenv(kRunsEnv);
  return (env != nullptr && *env != '\0') ? std::filesystem::path(env) : std::filesystem::path("runs");
}

/// Everything a subcommand needs from a run config file.
struct RunSettings {
  Config source;
  TrainConfig train;
  std::string task_name = "default";
  int n_per_condition = 250;
  std::uint64_t data_seed = 2024;
  std::string data_path;
  LatencyProtocol protocol;
  double encoder_ms = 0.5;
  int decode_dim = 263;
  FlowSolver solver = FlowSolver::Euler;

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "data.task", "data.n_per_condition", "data.seed", "data.path",
        "train.objective", "train.epochs", "train.batch_size", "train.lr", "train.beta1", "train.beta2",
        "train.weight_decay", "train.eps", "train.seed", "train.hidden", "train.time_dim",
        "schedule.steps", "schedule.beta_start", "schedule.beta_end",
        "eval.generations", "eval.reps_per_condition", "eval.diversity_pairs", "eval.diffusion_steps",
        "eval.flow_steps",
        "bench.batch_size", "bench.warmup", "bench.timed", "bench.mode", "bench.encoder_ms",
        "bench.decode_dim", "bench.solver"};
    return keys;
  }

  static RunSettings from_config(const Config& cfg) {
    for (const auto& [key, value] : cfg.values()) {
      if (known_keys().count(key) == 0) throw ConfigError("unknown config field '" + key + "'");
    }
    RunSettings s;
    s.source = cfg;
    s.train = TrainConfig::from_config(cfg);
    s.task_name = cfg.get_string("data.task", s.task_name);
    (void)task_by_name(s.task_name);
    s.n_per_condition = static_cast<int>(cfg.get_int("data.n_per_condition", s.n_per_condition));
    if (s.n_per_condition < 10) throw ConfigError("config field 'data.n_per_condition' must be >= 10");
    s.data_seed = cfg.get_u64("data.seed", s.data_seed);
    s.data_path = cfg.get_string("data.path", "");
    s.protocol.batch_size = static_cast<int>(cfg.get_int("bench.batch_size", s.protocol.batch_size));
    s.protocol.warmup = static_cast<int>(cfg.get_int("bench.warmup", s.protocol.warmup));
    s.protocol.timed = static_cast<int>(cfg.get_int("bench.timed", s.protocol.timed));
    s.protocol.mode = parse_timing_mode(cfg.get_string("bench.mode", "prior"));
    s.protocol.validate();
    s.encoder_ms = cfg.get_double("bench.encoder_ms", s.encoder_ms);
    if (!(s.encoder_ms >= 0.0)) throw ConfigError("config field 'bench.encoder_ms' must be >= 0");
    s.decode_dim = static_cast<int>(cfg.get_int("bench.decode_dim", s.decode_dim));
    if (s.decode_dim < 1) throw ConfigError("config field 'bench.decode_dim' must be positive");
    const std::string solver = cfg.get_string("bench.solver", "euler");
    if (solver == "euler") {
      s.solver = FlowSolver::Euler;
    } else if (solver == "rk4") {
      s.solver = FlowSolver::Rk4;
    } else {
      throw ConfigError("config field 'bench.solver': expected euler or rk4, got '" + solver + "'");
    }
    return s;
  }

  Task task() const { return task_by_name(task_name); }

  Dataset dataset() const {
    if (!data_path.empty()) {
      Dataset ds = load_dataset(data_path);
      const Task t = task();
      if (ds.num_conditions != static_cast<int>(t.size()) || ds.latent_dim != static_cast<int>(t.front().mixture.front().mean.size())) {
        throw ConfigError("config field 'data.path': dataset shape does not match task '" + task_name + "'");
      }
      return ds;
    }
    return generate_dataset(task(), n_per_condition, data_seed);
  }

  NoiseSchedule schedule() const {
    return build_scaled_linear_schedule(train.schedule_steps, train.beta_start, train.beta_end);
  }

  SweepSetup sweep_setup(int latent_dim) const {
    SweepSetup setup{schedule(), protocol, SurrogateStages::make(latent_dim, decode_dim, encoder_ms),
                     train.eval, solver, derive_seed(train.seed, kTestStream)};
    return setup;
  }
};

namespace detail {

inline Config load_config_with_overrides(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  Config cfg = Config::load(path);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void print_bundle_row(std::ostream& out, const std::string& prefix, const MetricBundle& m) {
  out << prefix << format_double(m.fid) << ',' << format_double(m.r1) << ',' << format_double(m.r2) << ','
      << format_double(m.r3) << ',' << format_double(m.matching_score) << ',' << format_double(m.diversity)
      << ',' << format_double(m.multimodality) << '\n';
}

inline void check_checkpoint_fits(const Checkpoint& ckpt, const Dataset& ds) {
  const NetworkShape& s = ckpt.net.shape();
  if (s.latent_dim != ds.latent_dim || s.cond_dim != ds.num_conditions) {
    throw ConfigError("checkpoint shape (D = " + std::to_string(s.latent_dim) + ", K = " +
                      std::to_string(s.cond_dim) + ") does not match the configured task");
  }
}

inline ChartSpec pareto_chart(const std::vector<ParetoPoint>& points, const std::string& title) {
  ChartSpec chart;
  chart.title = title;
  chart.x_label = "latency per batch (ms)";
  chart.y_label = "FID";
  std::map<ObjectiveKind, ChartSeries> by_kind;
  for (const auto& p : points) {
    auto& s = by_kind[p.objective];
    s.label = std::string(to_string(p.objective));
    s.line = false;
    s.xs.push_back(p.latency_ms);
    s.ys.push_back(p.metrics.fid);
  }
  for (auto& [kind, s] : by_kind) chart.series.push_back(std::move(s));
  return chart;
}

}  // namespace detail

inline int run_train(const RunSettings& settings, const std::string& run_id, std::ostream& out) {
  TrainConfig tc = settings.train;
  const std::string id = run_id.empty()
                             ? std::string(to_string(tc.objective)) + "-seed" + std::to_string(tc.seed)
                             : run_id;
  const std::filesystem::path dir = runs_root() / id;
  std::filesystem::create_directories(dir);
  tc.run_dir = dir.string();
  const Dataset ds = settings.dataset();
  const EmbeddingSpace space = EmbeddingSpace::from_task(settings.task());
  const RunRecord rec = train(tc, ds, space, nullptr, [&](const EpochRecord& e) {
    out << "epoch " << e.epoch << " loss " << format_double(e.loss) << " val_fid " << format_double(e.validation.fid)
        << '\n';
  });

  RunManifest manifest;
  manifest.config = settings.source;
  manifest.seed = tc.seed;
  manifest.created = detail::utc_timestamp();
  manifest.versions = RunManifest::default_versions();
  manifest.outputs["run_dir"] = dir.string();
  manifest.outputs["epoch_log"] = (dir / "epoch_log.csv").string();
  write_text_file((dir / "epoch_log.csv").string(), [&](std::ostream& f) { write_epoch_log(rec.epochs, f); });
  if (!rec.test.empty()) {
    std::vector<EpochRecord> test_rows = rec.epochs;
    for (std::size_t i = 0; i < test_rows.size(); ++i) test_rows[i].validation = rec.test[i];
    write_text_file((dir / "test_log.csv").string(), [&](std::ostream& f) { write_epoch_log(test_rows, f); });
    manifest.outputs["test_log"] = (dir / "test_log.csv").string();
    manifest.outputs["peak_epoch"] = std::to_string(rec.peak_epoch);
    manifest.outputs["peak_checkpoint"] = rec.epochs[static_cast<std::size_t>(rec.peak_epoch - 1)].checkpoint_path;
  }
  if (!rec.epochs.empty()) manifest.outputs["checkpoints"] = std::to_string(rec.epochs.size());
  write_text_file((dir / "manifest.ini").string(), [&](std::ostream& f) { f << manifest.to_text(); });
  out << "run directory " << dir.string() << '\n';
  if (rec.peak_epoch > 0) {
    out << "peak epoch " << rec.peak_epoch << " test_fid " << format_double(rec.peak_test.fid) << '\n';
  }
  return 0;
}

inline int run_eval(const RunSettings& settings, const std::string& checkpoint, int steps, const std::string& solver,
                    const std::string& split_name, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Dataset ds = settings.dataset();
  detail::check_checkpoint_fits(ckpt, ds);
  const Split split = parse_split(split_name);
  if (split == Split::Train) throw UsageError("eval: --split must be val or test");
  const EmbeddingSpace space = EmbeddingSpace::from_task(settings.task());
  SamplerSettings sampler{ckpt.meta.objective, steps, settings.solver};
  if (steps <= 0) {
    sampler.steps = ckpt.meta.objective == ObjectiveKind::Diffusion ? settings.train.val_diffusion_steps
                                                                      : settings.train.val_flow_steps;
  }
  if (!solver.empty()) sampler.solver = solver == "rk4" ? FlowSolver::Rk4 : FlowSolver::Euler;
  const MetricBundle m = evaluate_prior(ckpt.net, settings.schedule(), sampler, ds.split(split), space,
                                        settings.train.eval, derive_seed(settings.train.seed, kTestStream));
  out << "objective,steps,split,fid,r1,r2,r3,mm_dist,diversity,mmodality\n";
  detail::print_bundle_row(out, std::string(to_string(ckpt.meta.objective)) + "," + std::to_string(sampler.steps) +
                                    "," + to_string(split) + ",",
                           m);
  return 0;
}

inline int run_bench(const RunSettings& settings, const std::string& checkpoint, int steps, std::ostream& out,
                     std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const int dim = ckpt.net.shape().latent_dim;
  SamplerSettings sampler{ckpt.meta.objective, steps, settings.solver};
  const NoiseSchedule schedule = settings.schedule();
  const LatencyResult r =
      measure_sampler_latency(ckpt.net, schedule, sampler, ckpt.net.shape().cond_dim, dim, settings.protocol,
                              SurrogateStages::make(dim, settings.decode_dim, settings.encoder_ms));
  out << "objective,steps,mode,batch_size,warmup,timed,latency_ms\n";
  out << to_string(ckpt.meta.objective) << ',' << steps << ',' << to_string(settings.protocol.mode) << ','
      << settings.protocol.batch_size << ',' << settings.protocol.warmup << ',' << settings.protocol.timed << ','
      << format_double(r.mean_ms) << '\n';
  if (r.warning) err << "warning: " << *r.warning << '\n';
  return 0;
}

inline int run_pareto(const RunSettings& settings, const std::string& checkpoint, const std::string& steps,
                      const std::string& out_path, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Dataset ds = settings.dataset();
  detail::check_checkpoint_fits(ckpt, ds);
  const StepRange range = steps.empty() ? default_step_range(ckpt.meta.objective) : parse_step_range(steps);
  const EmbeddingSpace space = EmbeddingSpace::from_task(settings.task());
  const std::vector<ParetoPoint> points =
      pareto_sweep(ckpt.net, ckpt.meta.objective, range, ds.split(Split::Test), space,
                   settings.sweep_setup(ds.latent_dim));
  std::filesystem::path csv = out_path.empty()
                                  ? std::filesystem::path(checkpoint).parent_path() /
                                        ("pareto-" + std::string(to_string(ckpt.meta.objective)) + ".csv")
                                  : std::filesystem::path(out_path);
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
  write_text_file(csv.string(), [&](std::ostream& f) { write_pareto_csv(points, f); });
  std::filesystem::path svg = csv;
  svg.replace_extension(".svg");
  write_text_file(svg.string(), [&](std::ostream& f) {
    f << render_chart(detail::pareto_chart(points, "Efficiency vs quality (" +
                                                       std::string(to_string(settings.protocol.mode)) + ")"));
  });
  out << "wrote " << points.size() << " points to " << csv.string() << " and " << svg.string() << '\n';
  return 0;
}

/// Curves: raw and EMA(5) of `metric` per labelled epoch log. Pareto: one
/// scatter over all given sweep files.
inline int run_report(const std::vector<std::string>& curves, const std::vector<std::string>& paretos,
                      const std::string& metric, const std::string& out_dir, std::ostream& out) {
  if (curves.empty() && paretos.empty()) throw UsageError("report: give at least one --curves or --pareto input");
  (void)lower_is_better(metric);
  std::filesystem::create_directories(out_dir);
  if (!curves.empty()) {
    ChartSpec chart;
    chart.title = "Validation " + metric + " per epoch (raw and EMA, span 5)";
    chart.x_label = "epoch";
    chart.y_label = metric;
    for (const auto& spec : curves) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--curves expects LABEL=PATH, got '" + spec + "'");
      const std::string label = spec.substr(0, eq);
      const std::string path = spec.substr(eq + 1);
      auto in = open_input(path);
      const auto rows = read_epoch_log(in, path);
      if (rows.empty()) throw IoError(path + ": no epochs");
      ChartSeries raw{label, {}, {}, true, true};
      for (const auto& r : rows) {
        raw.xs.push_back(r.epoch);
        raw.ys.push_back(metric_value(r.metrics, metric));
      }
      ChartSeries smooth{label + " (EMA)", raw.xs, ema_smooth(raw.ys, 5), true, false};
      chart.series.push_back(std::move(raw));
      chart.series.push_back(std::move(smooth));
    }
    const auto path = std::filesystem::path(out_dir) / ("curves-" + metric + ".svg");
    write_text_file(path.string(), [&](std::ostream& f) { f << render_chart(chart); });
    out << "wrote " << path.string() << '\n';
  }
  if (!paretos.empty()) {
    std::vector<ParetoPoint> all;
    for (const auto& p : paretos) {
      auto in = open_input(p);
      const auto pts = read_pareto_csv(in, p);
      all.insert(all.end(), pts.begin(), pts.end());
    }
    const auto path = std::filesystem::path(out_dir) / "pareto.svg";
    write_text_file(path.string(), [&](std::ostream& f) { f << render_chart(detail::pareto_chart(all, "Efficiency vs quality")); });
    out << "wrote " << path.string() << '\n';
  }
  return 0;
}

/// Entry point shared by the executable and the tests. Returns the process
/// exit status: 0 on success, 2 on usage errors, 1 on any other failure.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  CLI::App app{"priorbench: diffusion vs rectified-flow prior benchmark", "priorbench"};
  app.require_subcommand(1);

  std::string config_path, objective, run_id, checkpoint, steps, mode, out_path, solver, split = "test",
                                                                                     metric = "fid";
  std::uint64_t seed = 0;
  int epochs = -1;
  std::vector<std::string> curves, paretos;

  auto* train_cmd = app.add_subcommand("train", "train a prior and write checkpoints plus logs");
  train_cmd->add_option("--config", config_path, "run config file")->required();
  train_cmd->add_option("--objective", objective, "diffusion or flow (overrides train.objective)");
  auto* seed_opt = train_cmd->add_option("--seed", seed, "training seed (overrides train.seed)");
  train_cmd->add_option("--epochs", epochs, "epoch count (overrides train.epochs)");
  train_cmd->add_option("--run-id", run_id, "run directory name under $PRIORBENCH_RUNS");

  auto* eval_cmd = app.add_subcommand("eval", "score one checkpoint");
  eval_cmd->add_option("--config", config_path, "run config file")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--steps", steps, "sampling steps");
  eval_cmd->add_option("--solver", solver, "flow solver")->check(CLI::IsMember({"euler", "rk4"}));
  eval_cmd->add_option("--split", split, "val or test")->check(CLI::IsMember({"val", "test"}));

  auto* bench_cmd = app.add_subcommand("bench", "time one sampler configuration");
  bench_cmd->add_option("--config", config_path, "run config file")->required();
  bench_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  bench_cmd->add_option("--steps", steps, "sampling steps")->required();
  bench_cmd->add_option("--mode", mode, "prior or e2e")->check(CLI::IsMember({"prior", "e2e"}));

  auto* pareto_cmd = app.add_subcommand("pareto", "latency/quality sweep over step counts");
  pareto_cmd->add_option("--config", config_path, "run config file")->required();
  pareto_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  pareto_cmd->add_option("--steps", steps, "step range a..b (default: 2..15 flow, 4..15 diffusion)");
  pareto_cmd->add_option("--mode", mode, "prior or e2e")->check(CLI::IsMember({"prior", "e2e"}));
  pareto_cmd->add_option("--out", out_path, "output CSV (an SVG is written next to it)");

  auto* report_cmd = app.add_subcommand("report", "render SVG charts from CSV logs");
  report_cmd->add_option("--config", config_path, "run config file (validated when given)");
  report_cmd->add_option("--curves", curves, "LABEL=epoch_log.csv");
  report_cmd->add_option("--pareto", paretos, "pareto CSV");
  report_cmd->add_option("--metric", metric, "metric to plot for curves");
  report_cmd->add_option("--out", out_path, "output directory")->required();

  if (argc <= 1) {
    err << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto parse_steps = [&](const std::string& text) {
    const StepRange r = parse_step_range(text);
    if (r.first != r.last) throw UsageError("--steps expects a single count here");
    return r.first;
  };

  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    if (app.got_subcommand(train_cmd)) {
      if (!objective.empty()) overrides.emplace_back("train.objective", objective);
      if (*seed_opt) overrides.emplace_back("train.seed", std::to_string(seed));
      if (epochs >= 0) overrides.emplace_back("train.epochs", std::to_string(epochs));
    }
    if (!mode.empty()) overrides.emplace_back("bench.mode", mode);
    std::optional<RunSettings> settings;
    if (!config_path.empty()) {
      settings = RunSettings::from_config(detail::load_config_with_overrides(config_path, overrides));
    }
    if (app.got_subcommand(train_cmd)) return run_train(*settings, run_id, out);
    if (app.got_subcommand(eval_cmd)) {
      return run_eval(*settings, checkpoint, steps.empty() ? 0 : parse_steps(steps), solver, split, out);
    }
    if (app.got_subcommand(bench_cmd)) return run_bench(*settings, checkpoint, parse_steps(steps), out, err);
    if (app.got_subcommand(pareto_cmd)) return run_pareto(*settings, checkpoint, steps, out_path, out);
    if (app.got_subcommand(report_cmd)) return run_report(curves, paretos, metric, out_path, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace priorbench
