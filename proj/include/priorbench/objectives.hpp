#pragma once

// Training objectives: DDPM noise prediction and rectified-flow velocity
// regression, each averaged over four independent timestep draws.

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "priorbench/core_math.hpp"
#include "priorbench/prior_net.hpp"

namespace priorbench {

enum class ObjectiveKind { Diffusion, Flow };

inline std::string_view to_string(ObjectiveKind kind) {
  return kind == ObjectiveKind::Diffusion ? "diffusion" : "flow";
}

inline ObjectiveKind parse_objective(std::string_view text) {
  if (text == "diffusion" || text == "ddpm") return ObjectiveKind::Diffusion;
  if (text == "flow" || text == "rectified-flow") return ObjectiveKind::Flow;
  throw ConfigError("unknown objective kind '" + std::string(text) +
                    "' (expected 'diffusion' or 'flow')");
}

/// Number of timestep draws averaged into every loss evaluation.
inline constexpr int kTimestepDraws = 4;

/// Beta, alpha and cumulative alpha tables, indexed 1..T (slot 0 unused in
/// the vectors; use alpha_bar_at(0) == 1 for the "clean" end).
struct NoiseSchedule {
  int steps = 0;
  Vector beta;       // size T, beta[k-1] is beta_k
  Vector alpha;      // 1 - beta
  Vector alpha_bar;  // cumulative product of alpha

  double beta_at(int k) const { return beta[check(k) - 1]; }
  double alpha_bar_at(int k) const {
    if (k == 0) return 1.0;
    return alpha_bar[check(k) - 1];
  }

 private:
  int check(int k) const {
    if (k < 1 || k > steps) {
      throw ContractError("NoiseSchedule: index " + std::to_string(k) + " outside [1, " +
                          std::to_string(steps) + "]");
    }
    return k;
  }
};

/// beta_k = (sqrt(b0) + (k-1)/(T-1) * (sqrt(b1) - sqrt(b0)))^2 for k = 1..T.
inline NoiseSchedule build_scaled_linear_schedule(int steps, double beta_start = 8.5e-4,
                                                  double beta_end = 1.2e-2) {
  if (steps < 2) throw ConfigError("schedule: step count must be >= 2, got " + std::to_string(steps));
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_start < beta_end < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  const double lo = std::sqrt(beta_start);
  const double hi = std::sqrt(beta_end);
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double root = lo + (static_cast<double>(i) / (steps - 1)) * (hi - lo);
    s.beta[i] = root * root;
    s.alpha[i] = 1.0 - s.beta[i];
    running *= s.alpha[i];
    s.alpha_bar[i] = running;
  }
  // Pin the endpoints exactly.
  s.beta[0] = beta_start;
  s.beta[steps - 1] = beta_end;
  s.alpha[0] = 1.0 - beta_start;
  s.alpha[steps - 1] = 1.0 - beta_end;
  s.alpha_bar[0] = s.alpha[0];
  s.alpha_bar[steps - 1] = s.alpha_bar[steps - 2] * s.alpha[steps - 1];
  // Samplers divide by sqrt(alpha_bar); keep it a normal double.
  if (!(s.alpha_bar[steps - 1] >= std::numeric_limits<double>::min())) {
    throw ConfigError("schedule: cumulative alpha underflows; use fewer steps or smaller betas");
  }
  return s;
}

/// sqrt(abar) * x0 + sqrt(1 - abar) * eps.
inline Matrix noise_with_alpha_bar(const Matrix& x0, const Matrix& eps, double alpha_bar) {
  if (eps.rows() != x0.rows() || eps.cols() != x0.cols()) {
    throw ContractError("diffusion_noising: eps must be shaped like x0");
  }
  return std::sqrt(alpha_bar) * x0 + std::sqrt(1.0 - alpha_bar) * eps;
}

inline void check_schedule_index(int k, const NoiseSchedule& s) {
  if (k < 1 || k > s.steps) {
    throw ContractError("diffusion_noising: index " + std::to_string(k) + " outside [1, " +
                        std::to_string(s.steps) + "]");
  }
}

/// Forward marginal x_k = sqrt(abar_k) x0 + sqrt(1 - abar_k) eps, 1 <= k <= T.
inline Matrix diffusion_noising(const Matrix& x0, int k, const Matrix& eps, const NoiseSchedule& s) {
  check_schedule_index(k, s);
  return noise_with_alpha_bar(x0, eps, s.alpha_bar_at(k));
}

/// Row-wise noising with one schedule index per row.
inline Matrix diffusion_noising(const Matrix& x0, const std::vector<int>& ks, const Matrix& eps,
                                const NoiseSchedule& s) {
  if (static_cast<Eigen::Index>(ks.size()) != x0.rows()) {
    throw ContractError("diffusion_noising: one index per row required");
  }
  if (eps.rows() != x0.rows() || eps.cols() != x0.cols()) {
    throw ContractError("diffusion_noising: eps must be shaped like x0");
  }
  Matrix out(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    const int k = ks[static_cast<std::size_t>(i)];
    check_schedule_index(k, s);
    const double ab = s.alpha_bar_at(k);
    out.row(i) = std::sqrt(ab) * x0.row(i) + std::sqrt(1.0 - ab) * eps.row(i);
  }
  return out;
}

struct LossReport {
  double loss = 0.0;
  std::array<double, kTimestepDraws> sub_losses{};
  Vector gradient;  // empty when the predictor has no backward pass
};

namespace detail {

// One draw's MSE term, and its gradient contribution scaled for the
// four-draw mean.
template <Predictor Model>
double accumulate_draw(const Model& model, const Matrix& x, const Vector& t, const Matrix& conds,
                       const Matrix& target, LossReport& report) {
  const double denom = static_cast<double>(target.rows() * target.cols());
  if constexpr (TrainablePredictor<Model>) {
    ForwardCache cache;
    const Matrix pred = model.forward(x, t, conds, &cache);
    const Matrix diff = pred - target;
    const Matrix grad_out = (2.0 / (denom * kTimestepDraws)) * diff;
    if (report.gradient.size() == 0) {
      report.gradient = model.backward(cache, grad_out);
    } else {
      report.gradient += model.backward(cache, grad_out);
    }
    return diff.squaredNorm() / denom;
  } else {
    const Matrix pred = model.predict(x, t, conds);
    return (pred - target).squaredNorm() / denom;
  }
}

inline void check_batch(const Matrix& batch, const Matrix& conds, const char* who) {
  if (batch.rows() < 1) throw ContractError(std::string(who) + ": batch must be nonempty");
  if (conds.rows() != batch.rows()) {
    throw ContractError(std::string(who) + ": one condition row per batch row required");
  }
}

inline void finish(LossReport& report) {
  double sum = 0.0;
  for (double v : report.sub_losses) sum += v;
  report.loss = sum / kTimestepDraws;
}

}  // namespace detail

/// Diffusion loss. Each draw samples k uniformly in 1..T per row, then eps,
/// and regresses eps from (x_k, k/T, c).
template <Predictor Model>
LossReport diffusion_loss(const Matrix& batch, const Matrix& conds, const Model& model,
                          const NoiseSchedule& s, SeededRng& rng) {
  detail::check_batch(batch, conds, "diffusion_loss");
  LossReport report;
  const Eigen::Index b = batch.rows();
  for (int draw = 0; draw < kTimestepDraws; ++draw) {
    std::vector<int> ks(static_cast<std::size_t>(b));
    Vector t(b);
    for (Eigen::Index i = 0; i < b; ++i) {
      const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.steps))) + 1;
      ks[static_cast<std::size_t>(i)] = k;
      t[i] = static_cast<double>(k) / s.steps;
    }
    const Matrix eps = sample_standard_normal(rng, b, batch.cols());
    const Matrix xk = diffusion_noising(batch, ks, eps, s);
    report.sub_losses[static_cast<std::size_t>(draw)] =
        detail::accumulate_draw(model, xk, t, conds, eps, report);
  }
  detail::finish(report);
  return report;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// t = logistic(z), z ~ N(0, 1).
inline double sample_logit_normal_t(SeededRng& rng) { return logistic(rng.normal()); }

struct FlowSample {
  Matrix x0;
  Matrix x1;
  Vector t;
  Matrix xt;
  Matrix v_true;
};

/// x_t = (1 - t) x1 + t x0 and v = x0 - x1, row-wise. t = 0 is noise.
inline FlowSample flow_sample_from(const Matrix& x0, const Matrix& x1, const Vector& t) {
  if (x1.rows() != x0.rows() || x1.cols() != x0.cols() || t.size() != x0.rows()) {
    throw ContractError("flow_sample_from: shape mismatch");
  }
  FlowSample s{x0, x1, t, Matrix(x0.rows(), x0.cols()), x0 - x1};
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    s.xt.row(i) = (1.0 - t[i]) * x1.row(i) + t[i] * x0.row(i);
  }
  return s;
}

inline FlowSample flow_make_sample(const Matrix& x0, SeededRng& rng) {
  if (!x0.allFinite()) throw ContractError("flow_make_sample: x0 has non-finite entries");
  Matrix x1 = sample_standard_normal(rng, x0.rows(), x0.cols());
  Vector t(x0.rows());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) t[i] = sample_logit_normal_t(rng);
  return flow_sample_from(x0, x1, t);
}

template <Predictor Model>
LossReport flow_loss(const Matrix& batch, const Matrix& conds, const Model& model, SeededRng& rng) {
  detail::check_batch(batch, conds, "flow_loss");
  LossReport report;
  for (int draw = 0; draw < kTimestepDraws; ++draw) {
    const FlowSample s = flow_make_sample(batch, rng);
    report.sub_losses[static_cast<std::size_t>(draw)] =
        detail::accumulate_draw(model, s.xt, s.t, conds, s.v_true, report);
  }
  detail::finish(report);
  return report;
}

template <Predictor Model>
LossReport objective_loss(ObjectiveKind kind, const Matrix& batch, const Matrix& conds,
                          const Model& model, const NoiseSchedule& s, SeededRng& rng) {
  return kind == ObjectiveKind::Diffusion ? diffusion_loss(batch, conds, model, s, rng)
                                          : flow_loss(batch, conds, model, rng);
}

}  // namespace priorbench
