#pragma once

#include <vector>

#include "priorbench/metrics.hpp"
#include "priorbench/samplers.hpp"
#include "priorbench/synth_data.hpp"

namespace priorbench {

/// Labels 0, 1, ..., K-1, 0, 1, ... so every condition gets the same share.
inline std::vector<int> round_robin_labels(int count, int num_conditions) {
  std::vector<int> labels(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) labels[static_cast<std::size_t>(i)] = i % num_conditions;
  return labels;
}

/// Generates settings.generations latents with round-robin labels and scores
/// them against `reference`. Deterministic in `seed`.
template <Predictor Model>
MetricBundle evaluate_prior(const Model& model, const NoiseSchedule& schedule,
                            const SamplerSettings& sampler, const SplitData& reference,
                            const EmbeddingSpace& space, const EvaluationSettings& settings,
                            std::uint64_t seed, FidDiagnostics* diag = nullptr) {
  const int k = space.num_conditions();
  const std::vector<int> labels = round_robin_labels(settings.generations, k);
  const Matrix conds = condition_matrix(labels, k);
  const int dim = static_cast<int>(space.projection.cols());
  const SamplerOutput out = generate_latents(model, schedule, sampler, conds, dim, derive_seed(seed, 1));
  return evaluate_generations(out.latents, labels, reference.samples, space, settings,
                              derive_seed(seed, 2), diag);
}

}  // namespace priorbench
