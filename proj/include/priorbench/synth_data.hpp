#pragma once

// Synthetic conditional latent distributions with known ground truth, and the
// train/validation/test dataset drawn from them.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "priorbench/core_math.hpp"

namespace priorbench {

struct MixtureComponent {
  double weight = 1.0;
  Vector mean;
  Matrix covariance;
};

struct ConditionSpec {
  int label = 0;
  Vector embedding;  // unit vector, orthogonal across labels
  std::vector<MixtureComponent> mixture;

  int latent_dim() const { return mixture.empty() ? 0 : static_cast<int>(mixture.front().mean.size()); }

  /// Mean of the whole mixture.
  Vector mixture_mean() const {
    Vector m = Vector::Zero(latent_dim());
    for (const auto& c : mixture) m += c.weight * c.mean;
    return m;
  }

  /// Covariance of the whole mixture (law of total covariance).
  Matrix mixture_covariance() const {
    const Vector mu = mixture_mean();
    Matrix cov = Matrix::Zero(latent_dim(), latent_dim());
    for (const auto& c : mixture) {
      const Vector d = c.mean - mu;
      cov += c.weight * (c.covariance + d * d.transpose());
    }
    return cov;
  }
};

using Task = std::vector<ConditionSpec>;

inline constexpr std::uint64_t kDefaultTaskSeed = 0x5eed'0008'0008ULL;
inline constexpr std::uint64_t kHardTaskSeed = 0x5eed'0016'0016ULL;

namespace detail {

inline Matrix random_rotation(int dim, SeededRng& rng) {
  const Matrix g = sample_standard_normal(rng, dim, dim);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  // Fix the column signs so Q is a deterministic function of g.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

inline Task build_task(int num_conditions, int dim, std::uint64_t seed, bool anisotropic,
                       double center_scale, double offset_scale) {
  SeededRng rng(seed);
  Task task;
  task.reserve(static_cast<std::size_t>(num_conditions));
  for (int k = 0; k < num_conditions; ++k) {
    ConditionSpec spec;
    spec.label = k;
    spec.embedding = Vector::Unit(num_conditions, k);
    const Vector center = center_scale * sample_standard_normal(rng, dim, 1);
    const Vector offset = offset_scale * sample_standard_normal(rng, dim, 1);
    const double w = 0.35 + 0.3 * rng.uniform();
    for (int side = 0; side < 2; ++side) {
      MixtureComponent comp;
      comp.weight = side == 0 ? w : 1.0 - w;
      comp.mean = side == 0 ? Vector(center + offset) : Vector(center - offset);
      if (anisotropic) {
        const Matrix rot = random_rotation(dim, rng);
        Vector scales(dim);
        for (int i = 0; i < dim; ++i) scales[i] = 0.02 + 0.28 * rng.uniform();
        comp.covariance = rot * scales.asDiagonal() * rot.transpose();
        comp.covariance = 0.5 * (comp.covariance + comp.covariance.transpose()).eval();
      } else {
        comp.covariance = 0.1 * Matrix::Identity(dim, dim);
      }
      spec.mixture.push_back(std::move(comp));
    }
    task.push_back(std::move(spec));
  }
  return task;
}

}  // namespace detail

/// Eight conditions in eight dimensions. Each condition is a two-component
/// mixture: means center +/- offset with center ~ 0.4 N(0, I), offset ~
/// 0.5 N(0, I), first weight in [0.35, 0.65], covariances 0.1 I. Everything is
/// drawn from kDefaultTaskSeed, so the specs are repository constants.
///
/// Conditions overlap: ground-truth samples retrieve their own condition at
/// R@1 around 0.7, so retrieval metrics do not saturate.
inline Task default_task() { return detail::build_task(8, 8, kDefaultTaskSeed, false, 0.4, 0.5); }

/// Sixteen conditions in sixteen dimensions with anisotropic covariances
/// (eigenvalues in [0.02, 0.3], random orientation).
inline Task hard_task() { return detail::build_task(16, 16, kHardTaskSeed, true, 0.4, 0.5); }

inline Task task_by_name(const std::string& name) {
  if (name == "default") return default_task();
  if (name == "hard") return hard_task();
  throw ConfigError("unknown task '" + name + "' (expected 'default' or 'hard')");
}

/// Component selection by cumulative weight, then mean + sqrt(cov) z.
inline Matrix ground_truth_sample(const ConditionSpec& spec, Eigen::Index n, SeededRng& rng) {
  if (n < 1) throw ContractError("ground_truth_sample: n must be >= 1");
  const int dim = spec.latent_dim();
  std::vector<Matrix> roots;
  roots.reserve(spec.mixture.size());
  for (const auto& c : spec.mixture) roots.push_back(psd_matrix_sqrt(c.covariance));
  Matrix out(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t pick = spec.mixture.size() - 1;
    double acc = 0.0;
    for (std::size_t c = 0; c < spec.mixture.size(); ++c) {
      acc += spec.mixture[c].weight;
      if (u < acc) {
        pick = c;
        break;
      }
    }
    const Matrix z = sample_standard_normal(rng, dim, 1);
    out.row(i) = (spec.mixture[pick].mean + roots[pick] * z).transpose();
  }
  return out;
}

enum class Split { Train = 0, Validation = 1, Test = 2 };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Validation;
  if (text == "test") return Split::Test;
  throw IoError("unknown split tag '" + std::string(text) + "'");
}

/// Records which splits were read, in order.
struct SplitAccessLog {
  std::vector<Split> reads;
};

struct SplitData {
  Matrix samples;
  std::vector<int> labels;
};

struct Dataset {
  int latent_dim = 0;
  int num_conditions = 0;
  std::uint64_t seed = 0;
  Matrix samples;
  std::vector<int> labels;
  std::vector<Split> splits;

  std::size_t size() const { return labels.size(); }

  std::size_t count(Split s) const {
    std::size_t n = 0;
    for (Split t : splits) n += (t == s);
    return n;
  }

  /// Copy of one split, in dataset order.
  SplitData split(Split which, SplitAccessLog* log = nullptr) const {
    if (log != nullptr) log->reads.push_back(which);
    SplitData out;
    const std::size_t n = count(which);
    out.samples.resize(static_cast<Eigen::Index>(n), latent_dim);
    out.labels.reserve(n);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < size(); ++i) {
      if (splits[i] != which) continue;
      out.samples.row(row++) = samples.row(static_cast<Eigen::Index>(i));
      out.labels.push_back(labels[i]);
    }
    return out;
  }

  bool operator==(const Dataset& o) const {
    return latent_dim == o.latent_dim && num_conditions == o.num_conditions && seed == o.seed &&
           samples == o.samples && labels == o.labels && splits == o.splits;
  }
};

/// n draws per condition, split 80/10/10 per condition (so every label is in
/// every split) by a seeded permutation. Train gets floor(0.8 n), validation
/// floor(0.1 n), test the remainder.
inline Dataset generate_dataset(const Task& specs, int n_per_condition, std::uint64_t seed) {
  if (n_per_condition < 10) {
    throw ConfigError("generate_dataset: n_per_condition must be >= 10, got " +
                      std::to_string(n_per_condition));
  }
  if (specs.empty()) throw ConfigError("generate_dataset: empty task");
  Dataset ds;
  ds.latent_dim = specs.front().latent_dim();
  ds.num_conditions = static_cast<int>(specs.size());
  ds.seed = seed;
  const auto n = static_cast<std::size_t>(n_per_condition);
  ds.samples.resize(static_cast<Eigen::Index>(n * specs.size()), ds.latent_dim);
  ds.labels.resize(n * specs.size());
  ds.splits.resize(n * specs.size());
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    SeededRng draw_rng(derive_seed(seed, 1, k));
    SeededRng split_rng(derive_seed(seed, 2, k));
    const Matrix block = ground_truth_sample(specs[k], static_cast<Eigen::Index>(n), draw_rng);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle_in_place(order, split_rng);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t row = k * n + i;
      ds.samples.row(static_cast<Eigen::Index>(row)) = block.row(static_cast<Eigen::Index>(i));
      ds.labels[row] = specs[k].label;
    }
    for (std::size_t r = 0; r < n; ++r) {
      const Split tag = r < n_train ? Split::Train : (r < n_train + n_val ? Split::Validation : Split::Test);
      ds.splits[k * n + order[r]] = tag;
    }
  }
  return ds;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw IoError("cannot parse number '" + std::string(text) + "'");
  }
  return v;
}

// Dataset text format, one record per line:
//
//   priorbench-dataset 1
//   dim <D>
//   conditions <K>
//   seed <seed>
//   counts <train> <val> <test>
//   <split> <label> <x_1> ... <x_D>     (one line per sample)
//
// Numbers use the shortest round-trip representation.
inline void write_dataset(const Dataset& ds, std::ostream& out) {
  out << "priorbench-dataset 1\n";
  out << "dim " << ds.latent_dim << "\n";
  out << "conditions " << ds.num_conditions << "\n";
  out << "seed " << ds.seed << "\n";
  out << "counts " << ds.count(Split::Train) << ' ' << ds.count(Split::Validation) << ' '
      << ds.count(Split::Test) << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << to_string(ds.splits[i]) << ' ' << ds.labels[i];
    for (int j = 0; j < ds.latent_dim; ++j) {
      out << ' ' << format_double(ds.samples(static_cast<Eigen::Index>(i), j));
    }
    out << '\n';
  }
}

inline Dataset read_dataset(std::istream& in) {
  auto expect = [&](const std::string& key) {
    std::string word;
    if (!(in >> word) || word != key) throw IoError("dataset: expected '" + key + "'");
  };
  expect("priorbench-dataset");
  int version = 0;
  if (!(in >> version) || version != 1) throw IoError("dataset: unsupported version");
  Dataset ds;
  std::size_t counts[3] = {0, 0, 0};
  expect("dim");
  in >> ds.latent_dim;
  expect("conditions");
  in >> ds.num_conditions;
  expect("seed");
  in >> ds.seed;
  expect("counts");
  in >> counts[0] >> counts[1] >> counts[2];
  if (!in || ds.latent_dim < 1) throw IoError("dataset: malformed header");
  const std::size_t total = counts[0] + counts[1] + counts[2];
  ds.samples.resize(static_cast<Eigen::Index>(total), ds.latent_dim);
  ds.labels.resize(total);
  ds.splits.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    std::string tag;
    if (!(in >> tag >> ds.labels[i])) throw IoError("dataset: truncated at row " + std::to_string(i));
    ds.splits[i] = parse_split(tag);
    for (int j = 0; j < ds.latent_dim; ++j) {
      std::string num;
      if (!(in >> num)) throw IoError("dataset: truncated at row " + std::to_string(i));
      ds.samples(static_cast<Eigen::Index>(i), j) = parse_double(num);
    }
  }
  if (ds.count(Split::Train) != counts[0] || ds.count(Split::Validation) != counts[1] ||
      ds.count(Split::Test) != counts[2]) {
    throw IoError("dataset: split counts do not match header");
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_dataset(ds, out);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path);
  return read_dataset(in);
}

}  // namespace priorbench
