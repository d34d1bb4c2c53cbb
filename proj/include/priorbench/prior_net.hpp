#pragma once

// Conditional MLP shared by both objectives. The same network predicts noise
// (diffusion) or velocity (flow); only the training target differs.
//
//   input  = [x (D) | time features (E_t) | condition (E_c)]
//   hidden = SiLU(W1 input + b1), SiLU(W2 h1 + b2)
//   output = W3 h2 + b3            (D)

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "priorbench/core_math.hpp"

namespace priorbench {

struct NetworkShape {
  int latent_dim = 8;
  int time_dim = 16;
  int cond_dim = 8;
  int hidden = 128;

  int input_dim() const { return latent_dim + time_dim + cond_dim; }

  std::size_t parameter_count() const {
    const auto in = static_cast<std::size_t>(input_dim());
    const auto h = static_cast<std::size_t>(hidden);
    const auto d = static_cast<std::size_t>(latent_dim);
    return h * in + h + h * h + h + d * h + d;
  }

  bool operator==(const NetworkShape&) const = default;
};

/// Sinusoidal features of t in [0, 1]: sin(w_j t) for j < E_t/2 followed by
/// cos(w_j t), with w_j = pi * 2^(j/2). cos(pi t) alone is injective on [0, 1].
inline RowVector time_embed(double t, int dim = 16) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("time_embed: t must lie in [0, 1], got " + std::to_string(t));
  }
  if (dim < 2 || dim % 2 != 0) throw ContractError("time_embed: dimension must be even and >= 2");
  const int half = dim / 2;
  RowVector out(dim);
  for (int j = 0; j < half; ++j) {
    const double w = std::numbers::pi * std::exp2(0.5 * j);
    out[j] = std::sin(w * t);
    out[half + j] = std::cos(w * t);
  }
  return out;
}

struct ForwardCache;

/// Anything that maps (x, t, condition) batches to a prediction batch.
template <typename M>
concept Predictor = requires(const M& m, const Matrix& x, const Vector& t, const Matrix& c) {
  { m.predict(x, t, c) } -> std::convertible_to<Matrix>;
};

/// A predictor that also exposes cached forward and analytic backward passes.
template <typename M>
concept TrainablePredictor =
    Predictor<M> && requires(const M& m, const Matrix& x, const Vector& t, const Matrix& c,
                             ForwardCache* cache, const ForwardCache& filled, const Matrix& g) {
      { m.forward(x, t, c, cache) } -> std::convertible_to<Matrix>;
      { m.backward(filled, g) } -> std::convertible_to<Vector>;
    };

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Activations kept by forward() for a later backward() call.
struct ForwardCache {
  Matrix input;
  Matrix z1, a1, z2, a2;

  bool empty() const { return input.size() == 0; }
};

class PriorNetwork {
 public:
  PriorNetwork() = default;

  explicit PriorNetwork(NetworkShape shape)
      : shape_(shape), params_(Vector::Zero(static_cast<Eigen::Index>(shape.parameter_count()))) {
    if (shape.latent_dim < 1 || shape.hidden < 1 || shape.cond_dim < 0 || shape.time_dim < 2) {
      throw ContractError("PriorNetwork: invalid shape");
    }
  }

  /// Uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), for
  /// weights and biases alike.
  static PriorNetwork initialized(NetworkShape shape, std::uint64_t seed) {
    PriorNetwork net(shape);
    SeededRng rng(seed);
    auto fill = [&](double* ptr, Eigen::Index count, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (Eigen::Index i = 0; i < count; ++i) ptr[i] = (2.0 * rng.uniform() - 1.0) * bound;
    };
    const int in = shape.input_dim();
    const int h = shape.hidden;
    const int d = shape.latent_dim;
    double* p = net.params_.data();
    fill(p + net.w1_offset(), Eigen::Index{h} * in, in);
    fill(p + net.b1_offset(), h, in);
    fill(p + net.w2_offset(), Eigen::Index{h} * h, h);
    fill(p + net.b2_offset(), h, h);
    fill(p + net.w3_offset(), Eigen::Index{d} * h, h);
    fill(p + net.b3_offset(), d, h);
    return net;
  }

  const NetworkShape& shape() const { return shape_; }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  using ConstMat = Eigen::Map<const Matrix>;
  using ConstVec = Eigen::Map<const Vector>;

  ConstMat w1() const { return {params_.data() + w1_offset(), shape_.hidden, shape_.input_dim()}; }
  ConstVec b1() const { return {params_.data() + b1_offset(), shape_.hidden}; }
  ConstMat w2() const { return {params_.data() + w2_offset(), shape_.hidden, shape_.hidden}; }
  ConstVec b2() const { return {params_.data() + b2_offset(), shape_.hidden}; }
  ConstMat w3() const { return {params_.data() + w3_offset(), shape_.latent_dim, shape_.hidden}; }
  ConstVec b3() const { return {params_.data() + b3_offset(), shape_.latent_dim}; }

  /// Named parameter blocks in storage order: (name, offset, rows, cols).
  struct Block {
    std::string name;
    Eigen::Index offset;
    Eigen::Index rows;
    Eigen::Index cols;
  };
  std::vector<Block> blocks() const {
    const Eigen::Index in = shape_.input_dim(), h = shape_.hidden, d = shape_.latent_dim;
    return {{"w1", w1_offset(), h, in}, {"b1", b1_offset(), h, 1},
            {"w2", w2_offset(), h, h},  {"b2", b2_offset(), h, 1},
            {"w3", w3_offset(), d, h},  {"b3", b3_offset(), d, 1}};
  }

  /// Assembles the network input [x | time features | condition].
  Matrix assemble_input(const Matrix& x, const Vector& t, const Matrix& cond) const {
    const Eigen::Index b = x.rows();
    if (x.cols() != shape_.latent_dim || t.size() != b || cond.rows() != b ||
        cond.cols() != shape_.cond_dim) {
      throw ContractError("PriorNetwork::forward: shape mismatch (x " + std::to_string(x.rows()) +
                          "x" + std::to_string(x.cols()) + ", t " + std::to_string(t.size()) +
                          ", cond " + std::to_string(cond.rows()) + "x" +
                          std::to_string(cond.cols()) + ")");
    }
    Matrix input(b, shape_.input_dim());
    input.leftCols(shape_.latent_dim) = x;
    for (Eigen::Index i = 0; i < b; ++i) {
      input.row(i).segment(shape_.latent_dim, shape_.time_dim) = time_embed(t[i], shape_.time_dim);
    }
    input.rightCols(shape_.cond_dim) = cond;
    return input;
  }

  /// Batched prediction. Rows are independent. When `cache` is given the
  /// intermediate activations are stored for backward().
  Matrix forward(const Matrix& x, const Vector& t, const Matrix& cond,
                 ForwardCache* cache = nullptr) const {
    Matrix input = assemble_input(x, t, cond);
    Matrix z1 = (input * w1().transpose()).rowwise() + b1().transpose();
    Matrix a1 = silu(z1);
    Matrix z2 = (a1 * w2().transpose()).rowwise() + b2().transpose();
    Matrix a2 = silu(z2);
    Matrix out = (a2 * w3().transpose()).rowwise() + b3().transpose();
    if (cache != nullptr) {
      cache->input = std::move(input);
      cache->z1 = std::move(z1);
      cache->a1 = std::move(a1);
      cache->z2 = std::move(z2);
      cache->a2 = std::move(a2);
    }
    return out;
  }

  Matrix predict(const Matrix& x, const Vector& t, const Matrix& cond) const {
    return forward(x, t, cond, nullptr);
  }

  /// Gradient of sum(output_gradient .* output) with respect to every
  /// parameter, in the flat parameter layout.
  Vector backward(const ForwardCache& cache, const Matrix& output_gradient) const {
    if (cache.empty()) {
      throw UsageError("PriorNetwork::backward: no cached activations; call forward with a cache");
    }
    if (output_gradient.rows() != cache.input.rows() ||
        output_gradient.cols() != shape_.latent_dim) {
      throw ContractError("PriorNetwork::backward: output gradient shape mismatch");
    }
    Vector grad(params_.size());
    auto block = [&](Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
      return Eigen::Map<Matrix>(grad.data() + offset, rows, cols);
    };
    auto vec = [&](Eigen::Index offset, Eigen::Index n) {
      return Eigen::Map<Vector>(grad.data() + offset, n);
    };
    const Eigen::Index in = shape_.input_dim(), h = shape_.hidden, d = shape_.latent_dim;

    block(w3_offset(), d, h).noalias() = output_gradient.transpose() * cache.a2;
    vec(b3_offset(), d) = output_gradient.colwise().sum().transpose();

    Matrix dz2 = (output_gradient * w3()).cwiseProduct(silu_derivative(cache.z2));
    block(w2_offset(), h, h).noalias() = dz2.transpose() * cache.a1;
    vec(b2_offset(), h) = dz2.colwise().sum().transpose();

    Matrix dz1 = (dz2 * w2()).cwiseProduct(silu_derivative(cache.z1));
    block(w1_offset(), h, in).noalias() = dz1.transpose() * cache.input;
    vec(b1_offset(), h) = dz1.colwise().sum().transpose();
    return grad;
  }

  bool operator==(const PriorNetwork& other) const {
    return shape_ == other.shape_ && params_ == other.params_;
  }

 private:
  static Matrix silu(const Matrix& z) {
    return z.unaryExpr([](double v) { return v * sigmoid(v); });
  }
  static Matrix silu_derivative(const Matrix& z) {
    return z.unaryExpr([](double v) {
      const double s = sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    });
  }

  Eigen::Index w1_offset() const { return 0; }
  Eigen::Index b1_offset() const { return Eigen::Index{shape_.hidden} * shape_.input_dim(); }
  Eigen::Index w2_offset() const { return b1_offset() + shape_.hidden; }
  Eigen::Index b2_offset() const { return w2_offset() + Eigen::Index{shape_.hidden} * shape_.hidden; }
  Eigen::Index w3_offset() const { return b2_offset() + shape_.hidden; }
  Eigen::Index b3_offset() const { return w3_offset() + Eigen::Index{shape_.latent_dim} * shape_.hidden; }

  NetworkShape shape_{};
  Vector params_;
};

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.01;
  double eps = 1e-8;
};

struct AdamWState {
  AdamWConfig config;
  Vector m;
  Vector v;
  long step = 0;

  AdamWState() = default;
  AdamWState(AdamWConfig cfg, std::size_t n)
      : config(cfg),
        m(Vector::Zero(static_cast<Eigen::Index>(n))),
        v(Vector::Zero(static_cast<Eigen::Index>(n))) {}
};

/// One AdamW update with decoupled weight decay:
///   w <- w - lr*wd*w - lr * m_hat / (sqrt(v_hat) + eps)
/// where the decay uses the pre-update parameter and never enters m or v.
inline void adamw_step(Vector& params, const Vector& grads, AdamWState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ContractError("adamw_step: parameter, gradient and moment sizes differ");
  }
  if (!grads.allFinite()) {
    throw DivergenceError("adamw_step: non-finite gradient at optimizer step " +
                          std::to_string(state.step + 1));
  }
  const AdamWConfig& c = state.config;
  state.step += 1;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const auto m_hat = state.m.array() / bias1;
  const auto v_hat = state.v.array() / bias2;
  params.array() = params.array() - c.lr * c.weight_decay * params.array() -
                   c.lr * m_hat / (v_hat.sqrt() + c.eps);
  if (!params.allFinite()) {
    throw DivergenceError("adamw_step: parameters became non-finite at optimizer step " +
                          std::to_string(state.step));
  }
}

inline void adamw_step(PriorNetwork& net, const Vector& grads, AdamWState& state) {
  adamw_step(net.parameters(), grads, state);
}

/// One-hot condition rows; the standard basis is the fixed orthonormal
/// embedding of each label.
inline Matrix condition_matrix(const std::vector<int>& labels, int num_conditions) {
  Matrix c = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), num_conditions);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_conditions) {
      throw ContractError("condition_matrix: label out of range: " + std::to_string(labels[i]));
    }
    c(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return c;
}

}  // namespace priorbench
