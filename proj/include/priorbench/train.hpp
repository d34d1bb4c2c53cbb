#pragma once

// Matched-conditions training driver: seeded epochs over the train split,
// per-epoch validation and checkpoints, then a post-hoc sweep of every
// checkpoint on the test split to find the peak epoch.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "priorbench/checkpoint.hpp"
#include "priorbench/config.hpp"
#include "priorbench/evaluate.hpp"
#include "priorbench/objectives.hpp"
#include "priorbench/prior_net.hpp"

namespace priorbench {

// Seed streams. Data order and initialization depend only on the seed, so
// diffusion and flow runs with equal seeds see identical batches.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kShuffleStream = 2;
inline constexpr std::uint64_t kLossStream = 3;
inline constexpr std::uint64_t kValidationStream = 4;
inline constexpr std::uint64_t kTestStream = 5;

struct TrainConfig {
  ObjectiveKind objective = ObjectiveKind::Flow;
  int epochs = 200;
  int batch_size = 50;
  AdamWConfig optimizer;
  int schedule_steps = 1000;
  double beta_start = 8.5e-4;
  double beta_end = 1.2e-2;
  std::uint64_t seed = 0;
  int hidden = 128;
  int time_dim = 16;
  EvaluationSettings eval;
  int val_diffusion_steps = 50;
  int val_flow_steps = 10;
  bool sweep_test = true;   // evaluate every checkpoint on the test split afterwards
  std::string run_dir;      // when set, epoch-<n>.ckpt files are written here
  std::uint64_t config_hash = 0;

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v < 1) throw ConfigError(std::string("config field '") + name + "' must be positive");
    };
    if (epochs < 0) throw ConfigError("config field 'train.epochs' must be >= 0");
    positive(batch_size, "train.batch_size");
    positive(hidden, "train.hidden");
    positive(val_diffusion_steps, "eval.diffusion_steps");
    positive(val_flow_steps, "eval.flow_steps");
    positive(eval.generations, "eval.generations");
    if (time_dim < 2 || time_dim % 2 != 0) {
      throw ConfigError("config field 'train.time_dim' must be an even number >= 2");
    }
    if (!(optimizer.lr > 0.0)) throw ConfigError("config field 'train.lr' must be positive");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) {
      throw ConfigError("config field 'train.beta1' must lie in [0, 1)");
    }
    if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
      throw ConfigError("config field 'train.beta2' must lie in [0, 1)");
    }
    if (!(optimizer.weight_decay >= 0.0)) {
      throw ConfigError("config field 'train.weight_decay' must be >= 0");
    }
    if (!(optimizer.eps > 0.0)) throw ConfigError("config field 'train.eps' must be positive");
    if (val_diffusion_steps > schedule_steps) {
      throw ConfigError("config field 'eval.diffusion_steps' exceeds 'schedule.steps'");
    }
    if (eval.reps_per_condition < 2) {
      throw ConfigError("config field 'eval.reps_per_condition' must be >= 2");
    }
    positive(eval.diversity_pairs, "eval.diversity_pairs");
    // Schedule bounds are checked by the schedule builder.
    (void)build_scaled_linear_schedule(schedule_steps, beta_start, beta_end);
  }

  SamplerSettings validation_sampler() const {
    SamplerSettings s;
    s.kind = objective;
    s.steps = objective == ObjectiveKind::Diffusion ? val_diffusion_steps : val_flow_steps;
    return s;
  }

  static TrainConfig from_config(const Config& cfg) {
    TrainConfig c;
    c.objective = parse_objective(cfg.get_string("train.objective", "flow"));
    c.epochs = static_cast<int>(cfg.get_int("train.epochs", c.epochs));
    c.batch_size = static_cast<int>(cfg.get_int("train.batch_size", c.batch_size));
    c.optimizer.lr = cfg.get_double("train.lr", c.optimizer.lr);
    c.optimizer.beta1 = cfg.get_double("train.beta1", c.optimizer.beta1);
    c.optimizer.beta2 = cfg.get_double("train.beta2", c.optimizer.beta2);
    c.optimizer.weight_decay = cfg.get_double("train.weight_decay", c.optimizer.weight_decay);
    c.optimizer.eps = cfg.get_double("train.eps", c.optimizer.eps);
    c.seed = cfg.get_u64("train.seed", c.seed);
    c.hidden = static_cast<int>(cfg.get_int("train.hidden", c.hidden));
    c.time_dim = static_cast<int>(cfg.get_int("train.time_dim", c.time_dim));
    c.schedule_steps = static_cast<int>(cfg.get_int("schedule.steps", c.schedule_steps));
    c.beta_start = cfg.get_double("schedule.beta_start", c.beta_start);
    c.beta_end = cfg.get_double("schedule.beta_end", c.beta_end);
    c.eval.generations = static_cast<int>(cfg.get_int("eval.generations", c.eval.generations));
    c.eval.reps_per_condition =
        static_cast<int>(cfg.get_int("eval.reps_per_condition", c.eval.reps_per_condition));
    c.eval.diversity_pairs = static_cast<int>(cfg.get_int("eval.diversity_pairs", c.eval.diversity_pairs));
    c.val_diffusion_steps = static_cast<int>(cfg.get_int("eval.diffusion_steps", c.val_diffusion_steps));
    c.val_flow_steps = static_cast<int>(cfg.get_int("eval.flow_steps", c.val_flow_steps));
    c.config_hash = cfg.hash();
    c.validate();
    return c;
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  MetricBundle validation;
  double seconds = 0.0;
  std::string checkpoint_path;  // empty when checkpoints are kept in memory only
};

struct RunRecord {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  std::vector<PriorNetwork> checkpoints;  // checkpoints[e - 1] is the state after epoch e
  std::vector<MetricBundle> test;         // per epoch, filled by the post-hoc sweep
  int peak_epoch = 0;                     // lowest test FID; 0 when nothing was swept
  MetricBundle peak_test;
  std::map<std::string, int> peak_by_metric;

  std::vector<double> validation_series(const std::string& metric) const;
};

inline double metric_value(const MetricBundle& m, const std::string& metric) {
  if (metric == "fid") return m.fid;
  if (metric == "r1") return m.r1;
  if (metric == "r2") return m.r2;
  if (metric == "r3") return m.r3;
  if (metric == "mm_dist" || metric == "matching_score") return m.matching_score;
  if (metric == "diversity") return m.diversity;
  if (metric == "mmodality" || metric == "multimodality") return m.multimodality;
  throw ConfigError("unknown metric '" + metric + "'");
}

inline bool lower_is_better(const std::string& metric) {
  if (metric == "fid" || metric == "mm_dist" || metric == "matching_score") return true;
  if (metric == "r1" || metric == "r2" || metric == "r3" || metric == "diversity" ||
      metric == "mmodality" || metric == "multimodality") {
    return false;
  }
  throw ConfigError("unknown peak criterion '" + metric + "'");
}

inline std::vector<double> RunRecord::validation_series(const std::string& metric) const {
  std::vector<double> out;
  out.reserve(epochs.size());
  for (const auto& e : epochs) out.push_back(metric_value(e.validation, metric));
  return out;
}

/// 1-based index of the best value; ties go to the earlier epoch.
inline int select_peak_epoch(const std::vector<double>& series, const std::string& criterion) {
  const bool minimize = lower_is_better(criterion);
  if (series.empty()) throw ContractError("select_peak_epoch: empty record");
  std::size_t best = 0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (minimize ? series[i] < series[best] : series[i] > series[best]) best = i;
  }
  return static_cast<int>(best) + 1;
}

inline int select_peak_epoch(const std::vector<MetricBundle>& series, const std::string& criterion) {
  lower_is_better(criterion);
  std::vector<double> values;
  values.reserve(series.size());
  for (const auto& m : series) values.push_back(metric_value(m, criterion));
  return select_peak_epoch(values, criterion);
}

/// Peak over the test sweep when present, otherwise over validation.
inline int select_peak_epoch(const RunRecord& record, const std::string& criterion) {
  if (!record.test.empty()) return select_peak_epoch(record.test, criterion);
  std::vector<MetricBundle> val;
  for (const auto& e : record.epochs) val.push_back(e.validation);
  return select_peak_epoch(val, criterion);
}

inline NetworkShape network_shape_for(const TrainConfig& config, const Dataset& dataset) {
  NetworkShape shape;
  shape.latent_dim = dataset.latent_dim;
  shape.cond_dim = dataset.num_conditions;
  shape.hidden = config.hidden;
  shape.time_dim = config.time_dim;
  return shape;
}

using ProgressCallback = std::function<void(const EpochRecord&)>;

inline RunRecord train(const TrainConfig& config, const Dataset& dataset, const EmbeddingSpace& space,
                       SplitAccessLog* log = nullptr, const ProgressCallback& progress = {}) {
  config.validate();
  if (dataset.count(Split::Train) == 0 || dataset.count(Split::Validation) == 0 ||
      dataset.count(Split::Test) == 0) {
    throw ContractError("train: dataset must have nonempty train, validation and test splits");
  }
  if (space.num_conditions() != dataset.num_conditions) {
    throw ContractError("train: embedding space and dataset disagree on the condition count");
  }
  RunRecord record;
  record.config = config;
  if (config.epochs == 0) return record;

  const NoiseSchedule schedule =
      build_scaled_linear_schedule(config.schedule_steps, config.beta_start, config.beta_end);
  PriorNetwork net = PriorNetwork::initialized(network_shape_for(config, dataset),
                                               derive_seed(config.seed, kInitStream));
  AdamWState opt(config.optimizer, net.parameter_count());

  const SplitData train_split = dataset.split(Split::Train, log);
  const SplitData val_split = dataset.split(Split::Validation, log);
  const auto n_train = static_cast<std::size_t>(train_split.samples.rows());
  const int dim = dataset.latent_dim;
  const SamplerSettings val_sampler = config.validation_sampler();

  if (!config.run_dir.empty()) std::filesystem::create_directories(config.run_dir);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    SeededRng shuffle_rng(derive_seed(config.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
    shuffle_in_place(order, shuffle_rng);
    SeededRng loss_rng(derive_seed(config.seed, kLossStream, static_cast<std::uint64_t>(epoch)));

    double loss_sum = 0.0;
    int batches = 0;
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t begin = 0; begin < n_train; begin += bs) {
      const std::size_t end = std::min(n_train, begin + bs);
      Matrix batch(static_cast<Eigen::Index>(end - begin), dim);
      std::vector<int> labels(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        batch.row(static_cast<Eigen::Index>(i - begin)) =
            train_split.samples.row(static_cast<Eigen::Index>(order[i]));
        labels[i - begin] = train_split.labels[order[i]];
      }
      const Matrix conds = condition_matrix(labels, dataset.num_conditions);
      const LossReport report = objective_loss(config.objective, batch, conds, net, schedule, loss_rng);
      if (!std::isfinite(report.loss)) {
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batches + 1));
      }
      try {
        adamw_step(net, report.gradient, opt);
      } catch (const DivergenceError& e) {
        throw DivergenceError("train: epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches + 1) + ": " + e.what());
      }
      loss_sum += report.loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / batches;
    rec.validation = evaluate_prior(net, schedule, val_sampler, val_split, space, config.eval,
                                    derive_seed(config.seed, kValidationStream));
    if (!config.run_dir.empty()) {
      rec.checkpoint_path =
          (std::filesystem::path(config.run_dir) / ("epoch-" + std::to_string(epoch) + ".ckpt")).string();
      save_checkpoint({{config.objective, static_cast<std::uint64_t>(epoch), config.seed,
                        config.config_hash},
                       net},
                      rec.checkpoint_path);
    }
    record.checkpoints.push_back(net);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    record.epochs.push_back(rec);
    if (progress) progress(rec);
  }

  if (config.sweep_test) {
    const SplitData test_split = dataset.split(Split::Test, log);
    for (const auto& ckpt : record.checkpoints) {
      record.test.push_back(evaluate_prior(ckpt, schedule, val_sampler, test_split, space, config.eval,
                                           derive_seed(config.seed, kTestStream)));
    }
    record.peak_epoch = select_peak_epoch(record.test, "fid");
    record.peak_test = record.test[static_cast<std::size_t>(record.peak_epoch - 1)];
    for (const char* metric : {"fid", "r1", "r2", "r3", "mm_dist", "diversity", "mmodality"}) {
      record.peak_by_metric[metric] = select_peak_epoch(record.test, metric);
    }
  }
  return record;
}

/// Epoch where the EMA-smoothed series first comes within `factor` of its
/// own final smoothed value (1-based).
inline int convergence_epoch(const std::vector<double>& series, double factor = 1.1, int span = 5) {
  const std::vector<double> smooth = ema_smooth(series, span);
  const double target = factor * smooth.back();
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    if (smooth[i] <= target) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(smooth.size());
}

}  // namespace priorbench
