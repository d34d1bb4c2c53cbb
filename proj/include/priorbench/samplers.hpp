#pragma once

// Inference: stride-subsampled DDPM ancestral sampling and fixed-step ODE
// integration (Euler, RK4) of a learned velocity field.

#include <chrono>
#include <string>
#include <vector>

#include "priorbench/core_math.hpp"
#include "priorbench/objectives.hpp"
#include "priorbench/prior_net.hpp"

namespace priorbench {

struct StridedTimesteps {
  int schedule_steps = 0;
  int stride = 0;
  std::vector<int> indices;  // strictly decreasing, 1-based schedule indices

  int count() const { return static_cast<int>(indices.size()); }
};

/// Indices T, T - stride, ... (S entries) with stride = floor(T / S).
inline StridedTimesteps make_strided_timesteps(int schedule_steps, int sample_steps) {
  if (sample_steps < 1 || sample_steps > schedule_steps) {
    throw ConfigError("strided timesteps: need 1 <= S <= T (S = " + std::to_string(sample_steps) +
                      ", T = " + std::to_string(schedule_steps) + ")");
  }
  StridedTimesteps out;
  out.schedule_steps = schedule_steps;
  out.stride = schedule_steps / sample_steps;
  out.indices.reserve(static_cast<std::size_t>(sample_steps));
  for (int i = 0; i < sample_steps; ++i) {
    out.indices.push_back(std::max(1, schedule_steps - i * out.stride));
  }
  return out;
}

struct SamplerOutput {
  Matrix latents;
  std::vector<double> step_seconds;
  int steps = 0;
  long network_calls = 0;
  ObjectiveKind kind = ObjectiveKind::Flow;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline void check_finite_step(const Matrix& x, const char* who, int step) {
  if (!x.allFinite()) {
    throw DivergenceError(std::string(who) + ": non-finite latent at step " + std::to_string(step));
  }
}

}  // namespace detail

/// Posterior coefficients for one reverse jump k -> k_prev of the strided
/// chain, derived from the cumulative products at both retained indices:
///   mean = c0 * x0_hat + ct * x_k,  variance = (1 - abar_prev)/(1 - abar_k) * (1 - abar_k/abar_prev)
struct PosteriorCoefficients {
  double coef_x0 = 0.0;
  double coef_xt = 0.0;
  double variance = 0.0;
};

inline PosteriorCoefficients strided_posterior(double alpha_bar, double alpha_bar_prev) {
  const double alpha_gap = alpha_bar / alpha_bar_prev;
  const double beta_gap = 1.0 - alpha_gap;
  PosteriorCoefficients c;
  c.coef_x0 = std::sqrt(alpha_bar_prev) * beta_gap / (1.0 - alpha_bar);
  c.coef_xt = std::sqrt(alpha_gap) * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar);
  c.variance = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta_gap;
  return c;
}

/// Reverse process from pure noise. The initial latent and every injected
/// noise draw come from `rng`; the final step returns the posterior mean
/// (which equals x0_hat) without noise.
template <Predictor Model>
SamplerOutput ddpm_ancestral_sample(const Model& model, const NoiseSchedule& schedule,
                                    const StridedTimesteps& steps, const Matrix& conds,
                                    SeededRng& rng, int latent_dim) {
  if (steps.schedule_steps != schedule.steps || steps.indices.empty()) {
    throw ContractError("ddpm_ancestral_sample: timesteps do not match the schedule");
  }
  const Eigen::Index b = conds.rows();
  SamplerOutput out;
  out.kind = ObjectiveKind::Diffusion;
  out.steps = steps.count();
  Matrix x = sample_standard_normal(rng, b, latent_dim);
  for (int i = 0; i < steps.count(); ++i) {
    const auto start = detail::Clock::now();
    const int k = steps.indices[static_cast<std::size_t>(i)];
    const int k_prev = i + 1 < steps.count() ? steps.indices[static_cast<std::size_t>(i + 1)] : 0;
    const double ab = schedule.alpha_bar_at(k);
    const double ab_prev = schedule.alpha_bar_at(k_prev);

    const Vector t = Vector::Constant(b, static_cast<double>(k) / schedule.steps);
    const Matrix eps_hat = model.predict(x, t, conds);
    ++out.network_calls;
    const Matrix x0_hat = (x - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);

    if (k_prev == 0) {
      x = x0_hat;
    } else {
      const PosteriorCoefficients pc = strided_posterior(ab, ab_prev);
      x = pc.coef_x0 * x0_hat + pc.coef_xt * x;
      x += std::sqrt(pc.variance) * sample_standard_normal(rng, b, latent_dim);
    }
    detail::check_finite_step(x, "ddpm_ancestral_sample", i);
    out.step_seconds.push_back(detail::seconds_since(start));
  }
  out.latents = std::move(x);
  return out;
}

/// Left-point Euler from t = 0 (noise) to t = 1 (data) with S equal steps.
template <Predictor Model>
SamplerOutput euler_integrate(const Model& model, int steps, const Matrix& conds, const Matrix& x1) {
  if (steps < 1) throw ConfigError("euler_integrate: step count must be >= 1");
  SamplerOutput out;
  out.kind = ObjectiveKind::Flow;
  out.steps = steps;
  const double dt = 1.0 / steps;
  Matrix x = x1;
  for (int i = 0; i < steps; ++i) {
    const auto start = detail::Clock::now();
    const Vector t = Vector::Constant(x.rows(), i * dt);
    x += dt * model.predict(x, t, conds);
    ++out.network_calls;
    detail::check_finite_step(x, "euler_integrate", i);
    out.step_seconds.push_back(detail::seconds_since(start));
  }
  out.latents = std::move(x);
  return out;
}

/// Classical fourth-order Runge-Kutta, four field evaluations per step.
template <Predictor Model>
SamplerOutput rk4_integrate(const Model& model, int steps, const Matrix& conds, const Matrix& x1) {
  if (steps < 1) throw ConfigError("rk4_integrate: step count must be >= 1");
  SamplerOutput out;
  out.kind = ObjectiveKind::Flow;
  out.steps = steps;
  const double dt = 1.0 / steps;
  const Eigen::Index b = x1.rows();
  Matrix x = x1;
  for (int i = 0; i < steps; ++i) {
    const auto start = detail::Clock::now();
    const double t0 = i * dt;
    const Vector ta = Vector::Constant(b, t0);
    const Vector tm = Vector::Constant(b, t0 + 0.5 * dt);
    const Vector tb = Vector::Constant(b, std::min(1.0, t0 + dt));
    const Matrix k1 = model.predict(x, ta, conds);
    const Matrix k2 = model.predict(x + (0.5 * dt) * k1, tm, conds);
    const Matrix k3 = model.predict(x + (0.5 * dt) * k2, tm, conds);
    const Matrix k4 = model.predict(x + dt * k3, tb, conds);
    out.network_calls += 4;
    x += dt * ((k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0);
    detail::check_finite_step(x, "rk4_integrate", i);
    out.step_seconds.push_back(detail::seconds_since(start));
  }
  out.latents = std::move(x);
  return out;
}

enum class FlowSolver { Euler, Rk4 };

/// How to draw samples from a trained prior.
struct SamplerSettings {
  ObjectiveKind kind = ObjectiveKind::Flow;
  int steps = 10;
  FlowSolver solver = FlowSolver::Euler;
};

/// Generates one latent per condition row. All randomness (initial noise and,
/// for diffusion, injected noise) comes from `seed`, so two calls with equal
/// arguments return identical latents.
template <Predictor Model>
SamplerOutput generate_latents(const Model& model, const NoiseSchedule& schedule,
                               const SamplerSettings& settings, const Matrix& conds,
                               int latent_dim, std::uint64_t seed) {
  SeededRng rng(seed);
  if (settings.kind == ObjectiveKind::Diffusion) {
    return ddpm_ancestral_sample(model, schedule, make_strided_timesteps(schedule.steps, settings.steps),
                                 conds, rng, latent_dim);
  }
  const Matrix x1 = sample_standard_normal(rng, conds.rows(), latent_dim);
  return settings.solver == FlowSolver::Euler ? euler_integrate(model, settings.steps, conds, x1)
                                              : rk4_integrate(model, settings.steps, conds, x1);
}

}  // namespace priorbench
