#pragma once

// Latency measurement and efficiency/quality sweeps.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "priorbench/checkpoint.hpp"
#include "priorbench/evaluate.hpp"
#include "priorbench/samplers.hpp"

namespace priorbench {

enum class TimingMode { PriorOnly, EndToEnd };

inline const char* to_string(TimingMode m) { return m == TimingMode::PriorOnly ? "prior" : "e2e"; }

inline TimingMode parse_timing_mode(std::string_view text) {
  if (text == "prior" || text == "prior-only") return TimingMode::PriorOnly;
  if (text == "e2e" || text == "end-to-end") return TimingMode::EndToEnd;
  throw ConfigError("unknown timing mode '" + std::string(text) + "' (expected prior or e2e)");
}

struct LatencyProtocol {
  int batch_size = 32;
  int warmup = 3;
  int timed = 10;
  TimingMode mode = TimingMode::PriorOnly;

  void validate() const {
    if (batch_size < 1) throw ConfigError("config field 'bench.batch_size' must be positive");
    if (warmup < 0) throw ConfigError("config field 'bench.warmup' must be >= 0");
    if (timed < 1) throw ConfigError("config field 'bench.timed' must be >= 1");
  }
};

struct LatencyResult {
  double mean_ms = 0.0;
  std::vector<double> timed_ms;
  double clock_resolution_ms = 0.0;
  std::optional<std::string> warning;
};

/// Smallest observable tick of the monotonic clock, in milliseconds.
inline double monotonic_resolution_ms() {
  using Clock = std::chrono::steady_clock;
  double best = 1e300;
  for (int i = 0; i < 64; ++i) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(b - a).count());
  }
  return best;
}

/// Runs `invoke` protocol.warmup times untimed, then protocol.timed times
/// under the monotonic clock. Returns the mean per-call latency.
template <typename F>
LatencyResult measure_latency(F&& invoke, const LatencyProtocol& protocol) {
  protocol.validate();
  using Clock = std::chrono::steady_clock;
  for (int i = 0; i < protocol.warmup; ++i) invoke();
  LatencyResult out;
  out.timed_ms.reserve(static_cast<std::size_t>(protocol.timed));
  for (int i = 0; i < protocol.timed; ++i) {
    const auto start = Clock::now();
    invoke();
    out.timed_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  }
  double sum = 0.0;
  for (double v : out.timed_ms) sum += v;
  out.mean_ms = sum / protocol.timed;
  out.clock_resolution_ms = monotonic_resolution_ms();
  if (out.clock_resolution_ms > 0.01 * out.mean_ms) {
    out.warning = "timer resolution " + format_double(out.clock_resolution_ms) +
                  " ms exceeds 1% of the measured " + format_double(out.mean_ms) + " ms";
  }
  return out;
}

/// Stand-ins for the fixed pipeline around the prior: a constant-latency
/// condition encoder and a small affine decoder to a wider output space.
struct SurrogateStages {
  double encoder_ms = 0.5;
  Matrix decode_weight;  // [D x decode_dim]
  RowVector decode_bias;

  static SurrogateStages make(int latent_dim, int decode_dim = 263, double encoder_ms = 0.5,
                              std::uint64_t seed = 0xdec0deULL) {
    if (latent_dim < 1 || decode_dim < 1) throw ConfigError("surrogate stages: dimensions must be positive");
    if (!(encoder_ms >= 0.0)) throw ConfigError("config field 'bench.encoder_ms' must be >= 0");
    SeededRng rng(seed);
    SurrogateStages s;
    s.encoder_ms = encoder_ms;
    s.decode_weight = sample_standard_normal(rng, latent_dim, decode_dim) / std::sqrt(double(latent_dim));
    s.decode_bias = sample_standard_normal(rng, 1, decode_dim).row(0);
    return s;
  }

  /// One-hot rows for `labels`, after spinning for encoder_ms.
  Matrix encode(const std::vector<int>& labels, int num_conditions) const {
    using Clock = std::chrono::steady_clock;
    const auto until = Clock::now() + std::chrono::duration<double, std::milli>(encoder_ms);
    while (Clock::now() < until) {
    }
    return condition_matrix(labels, num_conditions);
  }

  Matrix decode(const Matrix& latents) const {
    Matrix out = latents * decode_weight;
    out.rowwise() += decode_bias;
    return out;
  }
};

/// One timed unit of work: generate a batch and, in end-to-end mode, wrap it
/// with the surrogate encoder and decoder.
template <Predictor Model>
double run_pipeline_once(const Model& model, const NoiseSchedule& schedule, const SamplerSettings& sampler,
                         const std::vector<int>& labels, int num_conditions, int latent_dim,
                         TimingMode mode, const SurrogateStages& stages, std::uint64_t seed) {
  if (mode == TimingMode::PriorOnly) {
    const Matrix conds = condition_matrix(labels, num_conditions);
    return generate_latents(model, schedule, sampler, conds, latent_dim, seed).latents(0, 0);
  }
  const Matrix conds = stages.encode(labels, num_conditions);
  const SamplerOutput out = generate_latents(model, schedule, sampler, conds, latent_dim, seed);
  return stages.decode(out.latents)(0, 0);
}

template <Predictor Model>
LatencyResult measure_sampler_latency(const Model& model, const NoiseSchedule& schedule,
                                      const SamplerSettings& sampler, int num_conditions, int latent_dim,
                                      const LatencyProtocol& protocol, const SurrogateStages& stages,
                                      std::uint64_t seed = 0) {
  const std::vector<int> labels = round_robin_labels(protocol.batch_size, num_conditions);
  volatile double sink = 0.0;
  return measure_latency(
      [&] {
        sink = sink + run_pipeline_once(model, schedule, sampler, labels, num_conditions, latent_dim,
                                        protocol.mode, stages, seed);
      },
      protocol);
}

struct ParetoPoint {
  ObjectiveKind objective = ObjectiveKind::Flow;
  int steps = 0;
  double latency_ms = 0.0;
  MetricBundle metrics;
};

struct StepRange {
  int first = 1;
  int last = 1;

  int count() const { return last - first + 1; }
};

/// "a..b" or a single count "n".
inline StepRange parse_step_range(std::string_view text) {
  auto parse_int = [&](std::string_view s) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw UsageError("invalid step range '" + std::string(text) + "' (expected a..b)");
    }
    return v;
  };
  const auto dots = text.find("..");
  StepRange r;
  if (dots == std::string_view::npos) {
    r.first = r.last = parse_int(text);
  } else {
    r.first = parse_int(text.substr(0, dots));
    r.last = parse_int(text.substr(dots + 2));
  }
  if (r.first < 1 || r.last < r.first) {
    throw UsageError("invalid step range '" + std::string(text) + "' (need 1 <= a <= b)");
  }
  return r;
}

/// Step ranges of the published sweeps: flow 2..15, diffusion 4..15.
inline StepRange default_step_range(ObjectiveKind kind) {
  return kind == ObjectiveKind::Flow ? StepRange{2, 15} : StepRange{4, 15};
}

struct SweepSetup {
  NoiseSchedule schedule;
  LatencyProtocol protocol;
  SurrogateStages stages;
  EvaluationSettings eval;
  FlowSolver solver = FlowSolver::Euler;
  std::uint64_t seed = 0;
};

/// One ParetoPoint per step count: latency under the protocol, then the
/// metric bundle on `reference` (the test split).
template <Predictor Model>
std::vector<ParetoPoint> pareto_sweep(const Model& model, ObjectiveKind kind, StepRange range,
                                      const SplitData& reference, const EmbeddingSpace& space,
                                      const SweepSetup& setup) {
  const int max_steps = kind == ObjectiveKind::Diffusion ? setup.schedule.steps : 1 << 20;
  if (range.first < 1 || range.last > max_steps || range.last < range.first) {
    throw ConfigError("pareto sweep: step range " + std::to_string(range.first) + ".." +
                      std::to_string(range.last) + " lies outside [1, " + std::to_string(max_steps) + "]");
  }
  const int latent_dim = static_cast<int>(space.projection.cols());
  std::vector<ParetoPoint> points;
  for (int s = range.first; s <= range.last; ++s) {
    SamplerSettings sampler{kind, s, setup.solver};
    ParetoPoint p;
    p.objective = kind;
    p.steps = s;
    p.latency_ms = measure_sampler_latency(model, setup.schedule, sampler, space.num_conditions(), latent_dim,
                                           setup.protocol, setup.stages, setup.seed)
                       .mean_ms;
    p.metrics = evaluate_prior(model, setup.schedule, sampler, reference, space, setup.eval, setup.seed);
    points.push_back(p);
  }
  return points;
}

/// Sweep from a checkpoint file; the checkpoint decides the objective.
inline std::vector<ParetoPoint> pareto_sweep(const std::string& checkpoint_path, std::optional<StepRange> range,
                                             const SplitData& reference, const EmbeddingSpace& space,
                                             const SweepSetup& setup) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const ObjectiveKind kind = ckpt.meta.objective;
  return pareto_sweep(ckpt.net, kind, range.value_or(default_step_range(kind)), reference, space, setup);
}

/// Least-squares slope of latency against step count.
inline double latency_slope(const std::vector<std::pair<double, double>>& steps_latency) {
  if (steps_latency.size() < 2) throw ProtocolError("per-step cost needs at least 2 points");
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : steps_latency) {
    mx += x;
    my += y;
  }
  mx /= steps_latency.size();
  my /= steps_latency.size();
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : steps_latency) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) throw ProtocolError("per-step cost needs at least 2 distinct step counts");
  return sxy / sxx;
}

/// Fitted ms per step for every objective present in `points`.
inline std::map<ObjectiveKind, double> per_step_cost(const std::vector<ParetoPoint>& points) {
  std::map<ObjectiveKind, std::vector<std::pair<double, double>>> by_kind;
  for (const auto& p : points) by_kind[p.objective].emplace_back(p.steps, p.latency_ms);
  if (by_kind.empty()) throw ProtocolError("per-step cost needs at least 2 points");
  std::map<ObjectiveKind, double> out;
  for (const auto& [kind, xy] : by_kind) {
    if (xy.size() < 2) {
      throw ProtocolError("per-step cost: objective " + std::string(to_string(kind)) + " has fewer than 2 points");
    }
    out[kind] = latency_slope(xy);
  }
  return out;
}

}  // namespace priorbench
