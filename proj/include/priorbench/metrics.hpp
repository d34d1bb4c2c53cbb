#pragma once

// Evaluation metrics over a fixed analytic joint embedding space: Frechet
// distance, R-precision, matching score, diversity, multimodality, plus the
// span-based EMA used for training curves.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "priorbench/core_math.hpp"
#include "priorbench/synth_data.hpp"

namespace priorbench {

inline constexpr std::uint64_t kEmbeddingSeed = 0xe3bedULL;

/// Fixed affine joint space. Latents map through z -> A z + b with A a
/// seeded rotation; a condition's one-hot vector c maps through
/// c -> A (M c) + b where column k of M is the mixture mean of condition k,
/// so each condition embeds at the image of its own data mean.
struct EmbeddingSpace {
  Matrix projection;       // E x D
  Vector offset;           // E
  Matrix condition_means;  // D x K

  static EmbeddingSpace from_task(const Task& task, std::uint64_t seed = kEmbeddingSeed) {
    if (task.empty()) throw ContractError("EmbeddingSpace: empty task");
    const int dim = task.front().latent_dim();
    EmbeddingSpace space;
    SeededRng rng(seed);
    space.projection = detail::random_rotation(dim, rng);
    space.offset = 0.25 * sample_standard_normal(rng, dim, 1);
    space.condition_means.resize(dim, static_cast<Eigen::Index>(task.size()));
    for (std::size_t k = 0; k < task.size(); ++k) {
      space.condition_means.col(static_cast<Eigen::Index>(k)) = task[k].mixture_mean();
    }
    return space;
  }

  int num_conditions() const { return static_cast<int>(condition_means.cols()); }
  int dim() const { return static_cast<int>(projection.rows()); }

  Matrix embed_latents(const Matrix& latents) const {
    if (latents.cols() != projection.cols()) throw ContractError("embed_latents: dimension mismatch");
    return (latents * projection.transpose()).rowwise() + offset.transpose();
  }

  /// Embeds condition vectors given as rows (one-hot rows for labels).
  Matrix embed_conditions(const Matrix& cond_rows) const {
    if (cond_rows.cols() != condition_means.cols()) {
      throw ContractError("embed_conditions: dimension mismatch");
    }
    return (cond_rows * condition_means.transpose() * projection.transpose()).rowwise() +
           offset.transpose();
  }

  Matrix condition_embeddings_for(const std::vector<int>& labels) const {
    Matrix out(static_cast<Eigen::Index>(labels.size()), dim());
    const Matrix table = embed_conditions(Matrix::Identity(num_conditions(), num_conditions()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= num_conditions()) {
        throw ContractError("condition label out of range: " + std::to_string(labels[i]));
      }
      out.row(static_cast<Eigen::Index>(i)) = table.row(labels[i]);
    }
    return out;
  }
};

struct FidDiagnostics {
  double clamped_mass = 0.0;  // total magnitude of negative eigenvalues set to 0
  bool warning = false;       // clamped_mass > 1e-6
};

/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
///
/// The trace of the product root is taken as tr((S_b^(1/2) S_a S_b^(1/2))^(1/2)),
/// a symmetric PSD matrix with the same eigenvalues as S_a S_b. Its negative
/// eigenvalues (round-off) are clamped to zero.
inline double frechet_distance(const GaussianStats& a, const GaussianStats& b,
                               FidDiagnostics* diag = nullptr) {
  if (a.dim() != b.dim()) throw ContractError("frechet_distance: dimension mismatch");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Matrix root_b = psd_matrix_sqrt(b.covariance);
  Matrix product = root_b * a.covariance * root_b;
  product = 0.5 * (product + product.transpose()).eval();
  const SymmetricEigen eig = jacobi_eigen(product);
  double trace_root = 0.0;
  double clamped = 0.0;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    const double lambda = eig.values[i];
    if (lambda < 0.0) {
      clamped += -lambda;
    } else {
      trace_root += std::sqrt(lambda);
    }
  }
  if (diag != nullptr) {
    diag->clamped_mass = clamped;
    diag->warning = clamped > 1e-6;
  }
  const double value =
      mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_root;
  return std::max(0.0, value);
}

namespace detail {

inline GaussianStats checked_stats(const Matrix& set, const char* name) {
  const Eigen::Index d = set.cols();
  if (set.rows() < d + 1) {
    throw EvaluationError(std::string("fid: ") + name + " set has " + std::to_string(set.rows()) +
                          " samples, need at least " + std::to_string(d + 1));
  }
  GaussianStats stats = estimate_moments(set);
  const SymmetricEigen eig = jacobi_eigen(stats.covariance);
  const double scale = std::max(stats.covariance.trace() / static_cast<double>(d), 1e-300);
  if (eig.values.minCoeff() <= 1e-12 * scale) {
    throw EvaluationError(std::string("fid: ") + name + " set has a degenerate covariance");
  }
  return stats;
}

}  // namespace detail

/// Frechet distance between Gaussian fits of two feature sets.
inline double fid(const Matrix& generated, const Matrix& reference, FidDiagnostics* diag = nullptr) {
  if (generated.cols() != reference.cols()) throw ContractError("fid: feature dimensions differ");
  const GaussianStats g = detail::checked_stats(generated, "generated");
  const GaussianStats r = detail::checked_stats(reference, "reference");
  return frechet_distance(g, r, diag);
}

struct RPrecision {
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
};

/// Retrieval precision. For each row i, the candidate pool is the true
/// candidate true_candidates.row(i) plus (pool_size - 1) mismatches, each the
/// candidate of a uniformly drawn row j with labels[j] != labels[i] (with
/// replacement). The rank of the true candidate is 1 + the number of
/// mismatches strictly closer in Euclidean distance.
inline RPrecision r_precision(const Matrix& generated, const Matrix& true_candidates,
                              const std::vector<int>& labels, SeededRng& rng, int pool_size = 32) {
  const auto n = generated.rows();
  if (n < pool_size) {
    throw ProtocolError("r_precision: need at least " + std::to_string(pool_size) +
                        " generations, got " + std::to_string(n));
  }
  if (true_candidates.rows() != n || true_candidates.cols() != generated.cols() ||
      static_cast<Eigen::Index>(labels.size()) != n) {
    throw ContractError("r_precision: inputs must have one row/label per generation");
  }
  if (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels.front(); })) {
    throw ProtocolError("r_precision: no mismatched candidates available (single label)");
  }
  long hits[3] = {0, 0, 0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int own = labels[static_cast<std::size_t>(i)];
    const double true_dist = (generated.row(i) - true_candidates.row(i)).norm();
    int closer = 0;
    for (int m = 1; m < pool_size; ++m) {
      Eigen::Index j = 0;
      do {
        j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      } while (labels[static_cast<std::size_t>(j)] == own);
      if ((generated.row(i) - true_candidates.row(j)).norm() < true_dist) ++closer;
    }
    for (int k = 0; k < 3; ++k) hits[k] += (closer <= k);
  }
  const double dn = static_cast<double>(n);
  return {hits[0] / dn, hits[1] / dn, hits[2] / dn};
}

inline RPrecision r_precision(const Matrix& generated, const std::vector<int>& labels,
                              const EmbeddingSpace& space, SeededRng& rng, int pool_size = 32) {
  return r_precision(generated, space.condition_embeddings_for(labels), labels, rng, pool_size);
}

/// Mean Euclidean distance between paired rows.
inline double matching_score(const Matrix& generated, const Matrix& paired) {
  if (generated.rows() != paired.rows() || generated.cols() != paired.cols()) {
    throw ContractError("matching_score: count mismatch");
  }
  if (generated.rows() == 0) throw ContractError("matching_score: empty input");
  return (generated - paired).rowwise().norm().mean();
}

/// Mean distance over n_pairs uniformly drawn index pairs (i != j).
inline double diversity(const Matrix& embeds, int n_pairs, SeededRng& rng) {
  const auto n = embeds.rows();
  if (n < 2) throw ProtocolError("diversity: need at least 2 embeddings");
  if (n_pairs < 1) throw ProtocolError("diversity: n_pairs must be >= 1");
  double total = 0.0;
  for (int p = 0; p < n_pairs; ++p) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - 1)));
    if (j >= i) ++j;
    total += (embeds.row(i) - embeds.row(j)).norm();
  }
  return total / n_pairs;
}

/// Per condition: mean distance over all pairs among its first
/// `reps_per_condition` generations; then the mean over conditions.
inline double multimodality(const std::map<int, Matrix>& per_condition, int reps_per_condition) {
  if (reps_per_condition < 2) throw ProtocolError("multimodality: reps_per_condition must be >= 2");
  if (per_condition.empty()) throw ProtocolError("multimodality: no conditions");
  double total = 0.0;
  for (const auto& [label, gens] : per_condition) {
    if (gens.rows() < 2) {
      throw ProtocolError("multimodality: condition " + std::to_string(label) +
                          " has fewer than 2 generations");
    }
    const Eigen::Index m = std::min<Eigen::Index>(reps_per_condition, gens.rows());
    double sum = 0.0;
    long pairs = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = i + 1; j < m; ++j) {
        sum += (gens.row(i) - gens.row(j)).norm();
        ++pairs;
      }
    }
    total += sum / static_cast<double>(pairs);
  }
  return total / static_cast<double>(per_condition.size());
}

/// Span-based EMA: y_0 = x_0, y_i = a x_i + (1 - a) y_{i-1}, a = 2/(span+1).
inline std::vector<double> ema_smooth(const std::vector<double>& series, int span = 5) {
  if (series.empty()) throw ContractError("ema_smooth: empty series");
  if (span < 1) throw ContractError("ema_smooth: span must be >= 1");
  const double a = 2.0 / (span + 1.0);
  std::vector<double> out(series.size());
  out[0] = series[0];
  for (std::size_t i = 1; i < series.size(); ++i) out[i] = a * series[i] + (1.0 - a) * out[i - 1];
  return out;
}

struct MetricBundle {
  double fid = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
  double matching_score = 0.0;
  double diversity = 0.0;
  double multimodality = 0.0;

  bool valid() const {
    const double vals[] = {fid, r1, r2, r3, matching_score, diversity, multimodality};
    for (double v : vals) {
      if (!std::isfinite(v)) return false;
    }
    return fid >= 0.0 && r1 <= r2 && r2 <= r3 && r1 >= 0.0 && r3 <= 1.0 && matching_score >= 0.0 &&
           diversity >= 0.0 && multimodality >= 0.0;
  }
};

struct EvaluationSettings {
  int generations = 1024;
  int reps_per_condition = 10;
  int diversity_pairs = 300;
  int retrieval_pool = 32;
};

/// Scores generated latents (with their condition labels) against a
/// reference set, everything measured in `space`.
inline MetricBundle evaluate_generations(const Matrix& generated, const std::vector<int>& labels,
                                         const Matrix& reference, const EmbeddingSpace& space,
                                         const EvaluationSettings& settings, std::uint64_t seed,
                                         FidDiagnostics* diag = nullptr) {
  const Matrix gen_embeds = space.embed_latents(generated);
  const Matrix ref_embeds = space.embed_latents(reference);
  const Matrix cond_embeds = space.condition_embeddings_for(labels);
  MetricBundle m;
  m.fid = fid(gen_embeds, ref_embeds, diag);
  SeededRng retrieval_rng(derive_seed(seed, 11));
  const RPrecision rp = r_precision(gen_embeds, cond_embeds, labels, retrieval_rng, settings.retrieval_pool);
  m.r1 = rp.r1;
  m.r2 = rp.r2;
  m.r3 = rp.r3;
  m.matching_score = matching_score(gen_embeds, cond_embeds);
  SeededRng diversity_rng(derive_seed(seed, 12));
  m.diversity = diversity(gen_embeds, settings.diversity_pairs, diversity_rng);

  std::map<int, std::vector<Eigen::Index>> rows_by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& rows = rows_by_label[labels[i]];
    if (static_cast<int>(rows.size()) < settings.reps_per_condition) {
      rows.push_back(static_cast<Eigen::Index>(i));
    }
  }
  std::map<int, Matrix> per_condition;
  for (const auto& [label, rows] : rows_by_label) {
    Matrix block(static_cast<Eigen::Index>(rows.size()), gen_embeds.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      block.row(static_cast<Eigen::Index>(r)) = gen_embeds.row(rows[r]);
    }
    per_condition.emplace(label, std::move(block));
  }
  m.multimodality = multimodality(per_condition, settings.reps_per_condition);
  return m;
}

}  // namespace priorbench
