#pragma once

// Inexact oracles for f(x) = 1/2 <Ax, x> - <b, x>.
//
// Vector noise replaces b by b~ with ||b~ - b||_2 <= delta_b; matrix noise
// replaces A by A ± M with ||M||_F = delta_A (hence ||A~ - A||_2 <= delta_A).
// All magnitudes are normalized exactly: a Gaussian draw xi is rescaled to
// Delta_j = sqrt(xi_j^2 delta^2 / sum_i xi_i^2), which has norm delta.

#include "linops.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

namespace noisy_cg::noise {

using linops::QuadraticProblem;
using linops::LinearOperator;

enum class Kind { exact, adversarial_b, stochastic_b, matrix, combined };
enum class VectorKind { none, adversarial, stochastic };
enum class Resample { fixed_per_run, each_iteration };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::exact: return "exact";
    case Kind::adversarial_b: return "adversarial_b";
    case Kind::stochastic_b: return "stochastic_b";
    case Kind::matrix: return "matrix";
    case Kind::combined: return "combined";
  }
  return "?";
}

inline const char* to_string(VectorKind k) {
  switch (k) {
    case VectorKind::none: return "none";
    case VectorKind::adversarial: return "adversarial";
    case VectorKind::stochastic: return "stochastic";
  }
  return "?";
}

inline const char* to_string(Resample r) {
  return r == Resample::fixed_per_run ? "fixed_per_run" : "each_iteration";
}

/// Per-run description of the oracle perturbation. The matrix part is active
/// when `matrix_noise` is set, the vector part when `vector_kind != none`;
/// a zero delta disables the corresponding perturbation.
struct NoiseModel {
  VectorKind vector_kind = VectorKind::none;
  double delta_b = 0;
  bool matrix_noise = false;
  double delta_a = 0;
  Resample resample = Resample::fixed_per_run;
  // Draw the vector magnitudes Delta once per run instead of per iteration.
  bool fixed_magnitudes = false;
  std::uint64_t seed = 0;

  static NoiseModel exact() { return {}; }
  static NoiseModel adversarial_b(double delta_b, std::uint64_t seed = 0) {
    NoiseModel m;
    m.vector_kind = VectorKind::adversarial;
    m.delta_b = delta_b;
    m.seed = seed;
    return m;
  }
  static NoiseModel stochastic_b(double delta_b, std::uint64_t seed = 0) {
    auto m = adversarial_b(delta_b, seed);
    m.vector_kind = VectorKind::stochastic;
    return m;
  }
  static NoiseModel matrix(double delta_a, std::uint64_t seed = 0,
                           Resample resample = Resample::fixed_per_run) {
    NoiseModel m;
    m.matrix_noise = true;
    m.delta_a = delta_a;
    m.resample = resample;
    m.seed = seed;
    return m;
  }
  static NoiseModel combined(double delta_a, VectorKind vector_kind,
                             double delta_b, std::uint64_t seed = 0) {
    auto m = matrix(delta_a, seed);
    m.vector_kind = vector_kind;
    m.delta_b = delta_b;
    return m;
  }

  bool has_vector_noise() const { return vector_kind != VectorKind::none && delta_b > 0; }
  bool has_matrix_noise() const { return matrix_noise && delta_a > 0; }

  Kind kind() const {
    const bool v = has_vector_noise(), m = has_matrix_noise();
    if (v && m) return Kind::combined;
    if (m) return Kind::matrix;
    if (v)
      return vector_kind == VectorKind::adversarial ? Kind::adversarial_b
                                                    : Kind::stochastic_b;
    return Kind::exact;
  }

  void validate() const {
    if (!(delta_b >= 0)) throw std::invalid_argument("noise: delta_b must be >= 0");
    if (!(delta_a >= 0)) throw std::invalid_argument("noise: delta_a must be >= 0");
  }
};

/// Nonnegative magnitudes with ||Delta||_2 = delta.
template <class Real = double>
vector_t<Real> sample_noise_magnitudes(std::size_t n, double delta,
                                       std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("noise magnitudes: n must be >= 1");
  if (!(delta >= 0)) throw std::invalid_argument("noise magnitudes: delta must be >= 0");
  if (delta == 0) return vector_t<Real>::Zero(Eigen::Index(n));
  vector_t<Real> xi = gaussian_vector<Real>(n, rng);
  Real sq = xi.squaredNorm();
  while (sq == Real(0)) {  // probability zero; redraw
    xi = gaussian_vector<Real>(n, rng);
    sq = xi.squaredNorm();
  }
  const Real d2 = Real(delta) * Real(delta);
  vector_t<Real> out(xi.size());
  for (Eigen::Index j = 0; j < xi.size(); ++j) {
    using std::sqrt;
    out[j] = sqrt(xi[j] * xi[j] * d2 / sq);
  }
  return out;
}

template <class Real = double>
vector_t<Real> sample_noise_magnitudes(std::size_t n, double delta, std::uint64_t seed) {
  auto rng = make_rng(seed, streams::fixed_magnitudes);
  return sample_noise_magnitudes<Real>(n, delta, rng);
}

template <class Real>
int sign_of(const Real& v) {
  return (Real(0) < v) - (v < Real(0));
}

/// b~_j = b_j + Delta_j sign(g_j), with sign(0) = 0.
template <class Real>
vector_t<Real> adversarial_b(const vector_t<Real>& b, const vector_t<Real>& magnitudes,
                             const vector_t<Real>& g) {
  linops::check_same_size(b.size(), magnitudes.size(), "adversarial_b");
  linops::check_same_size(b.size(), g.size(), "adversarial_b");
  vector_t<Real> out = b;
  for (Eigen::Index j = 0; j < b.size(); ++j)
    out[j] += magnitudes[j] * Real(sign_of(g[j]));
  return out;
}

/// b~ = b + Delta (coin) or b - Delta (!coin); one sign for the whole vector.
template <class Real>
vector_t<Real> stochastic_b(const vector_t<Real>& b, const vector_t<Real>& magnitudes,
                            bool coin) {
  linops::check_same_size(b.size(), magnitudes.size(), "stochastic_b");
  return coin ? vector_t<Real>(b + magnitudes) : vector_t<Real>(b - magnitudes);
}

/// Nonnegative n x n noise matrix with ||M||_F = delta_a.
template <class Real = double>
struct NoiseMatrix {
  matrix_t<Real> m;
  double frobenius_norm = 0;

  std::size_t dimension() const { return std::size_t(m.rows()); }
};

/// Entry m_pk = sqrt(xi_{(p-1)n+k}^2 delta_a^2 / sum_i xi_i^2), the xi being
/// n^2 standard normals drawn row by row from `rng`.
template <class Real = double>
NoiseMatrix<Real> make_noise_matrix(std::size_t n, double delta_a, std::mt19937_64& rng,
                                    std::size_t dense_cap = default_dense_cap) {
  if (n < 1) throw std::invalid_argument("noise matrix: n must be >= 1");
  if (n > dense_cap)
    throw capacity_error("noise matrix: n = " + std::to_string(n) +
                         " exceeds dense cap " + std::to_string(dense_cap));
  if (!(delta_a >= 0)) throw std::invalid_argument("noise matrix: delta_a must be >= 0");
  NoiseMatrix<Real> out;
  out.m = matrix_t<Real>::Zero(Eigen::Index(n), Eigen::Index(n));
  out.frobenius_norm = delta_a;
  if (delta_a == 0) return out;
  std::normal_distribution<double> normal;
  Real sq(0);
  for (Eigen::Index p = 0; p < out.m.rows(); ++p)
    for (Eigen::Index k = 0; k < out.m.cols(); ++k) {
      const Real xi = Real(normal(rng));
      out.m(p, k) = xi * xi;
      sq += xi * xi;
    }
  if (sq == Real(0)) throw std::runtime_error("noise matrix: degenerate draw");
  const Real scale = Real(delta_a) * Real(delta_a) / sq;
  out.m = (out.m * scale).cwiseSqrt();
  return out;
}

template <class Real = double>
NoiseMatrix<Real> make_noise_matrix(std::size_t n, double delta_a, std::uint64_t seed,
                                    std::size_t dense_cap = default_dense_cap) {
  auto rng = make_rng(seed, streams::noise_matrix);
  return make_noise_matrix<Real>(n, delta_a, rng, dense_cap);
}

/// Oracle data for one iteration: the action of A~ = A + s M and b~.
template <class Real = double>
class OracleView {
 public:
  OracleView(std::shared_ptr<const LinearOperator<Real>> a,
             std::shared_ptr<const NoiseMatrix<Real>> m, int sign, vector_t<Real> b_tilde,
             std::size_t iteration,
             std::shared_ptr<const matrix_t<Real>> a_tilde = nullptr)
      : a_(std::move(a)),
        m_(std::move(m)),
        sign_(m_ ? sign : 0),
        b_tilde_(std::move(b_tilde)),
        iteration_(iteration),
        a_tilde_(std::move(a_tilde)) {}

  /// A~ x; computed as A x ± M x unless A ± M was formed up front.
  void apply_into(const vector_t<Real>& x, vector_t<Real>& y) const {
    if (a_tilde_) {
      linops::check_same_size(x.size(), a_tilde_->cols(), "oracle apply");
      y.noalias() = *a_tilde_ * x;
      return;
    }
    a_->apply_into(x, y);
    if (sign_ > 0)
      y.noalias() += m_->m * x;
    else if (sign_ < 0)
      y.noalias() -= m_->m * x;
  }

  vector_t<Real> apply(const vector_t<Real>& x) const {
    vector_t<Real> y;
    apply_into(x, y);
    return y;
  }

  const vector_t<Real>& b_tilde() const { return b_tilde_; }
  std::size_t iteration() const { return iteration_; }
  /// +1 or -1 when matrix noise is active this iteration, else 0.
  int matrix_sign() const { return sign_; }
  const NoiseMatrix<Real>* noise_matrix() const { return m_.get(); }

 private:
  std::shared_ptr<const LinearOperator<Real>> a_;
  std::shared_ptr<const NoiseMatrix<Real>> m_;
  int sign_;
  vector_t<Real> b_tilde_;
  std::size_t iteration_;
  std::shared_ptr<const matrix_t<Real>> a_tilde_;
};

/// Stateful per-run oracle. The view at iteration k is a deterministic
/// function of (model, problem, x_k, k); it does not depend on call order.
template <class Real = double>
class NoiseOracle {
 public:
  NoiseOracle(NoiseModel model, const QuadraticProblem<Real>& problem,
              std::size_t dense_cap = default_dense_cap)
      : model_(model), a_(problem.a), b_(problem.b), dense_cap_(dense_cap) {
    model_.validate();
    const std::size_t n = problem.dimension();
    if (model_.has_matrix_noise()) {
      if (n > dense_cap_)
        throw capacity_error("matrix noise: n = " + std::to_string(n) +
                             " exceeds dense cap " + std::to_string(dense_cap_));
      if (model_.resample == Resample::fixed_per_run) {
        m_ = std::make_shared<const NoiseMatrix<Real>>(
            make_noise_matrix<Real>(n, model_.delta_a, model_.seed, dense_cap_));
        if (!a_->is_diagonal()) {
          const auto& a = std::get<linops::DenseSymmetric<Real>>(a_->rep()).entries;
          plus_ = std::make_shared<const matrix_t<Real>>(a + m_->m);
          minus_ = std::make_shared<const matrix_t<Real>>(a - m_->m);
        }
      }
    }
    if (model_.has_vector_noise() && model_.fixed_magnitudes)
      fixed_delta_ = sample_noise_magnitudes<Real>(n, model_.delta_b, model_.seed);
  }

  const NoiseModel& model() const { return model_; }

  /// `exact_gradient` is A x_k - b for the true data; it is only consulted by
  /// the adversarial model and is recomputed when not supplied.
  OracleView<Real> view(const vector_t<Real>& x, std::size_t k,
                        const vector_t<Real>* exact_gradient = nullptr) const {
    linops::check_same_size(x.size(), b_.size(), "oracle_view");
    auto rng = make_rng(model_.seed, streams::iteration, k);
    std::bernoulli_distribution coin(0.5);

    std::shared_ptr<const NoiseMatrix<Real>> m;
    int sign = 0;
    if (model_.has_matrix_noise()) {
      sign = coin(rng) ? 1 : -1;
      if (model_.resample == Resample::fixed_per_run)
        m = m_;
      else {
        auto mrng = make_rng(model_.seed, streams::noise_matrix, k + 1);
        m = std::make_shared<const NoiseMatrix<Real>>(
            make_noise_matrix<Real>(std::size_t(b_.size()), model_.delta_a, mrng, dense_cap_));
      }
    }

    vector_t<Real> b_tilde;
    if (model_.has_vector_noise()) {
      vector_t<Real> delta = fixed_delta_
                                 ? *fixed_delta_
                                 : sample_noise_magnitudes<Real>(
                                       std::size_t(b_.size()), model_.delta_b, rng);
      if (model_.vector_kind == VectorKind::adversarial) {
        if (exact_gradient) {
          b_tilde = adversarial_b<Real>(b_, delta, *exact_gradient);
        } else {
          const vector_t<Real> g = a_->apply(x) - b_;
          b_tilde = adversarial_b<Real>(b_, delta, g);
        }
      } else {
        b_tilde = stochastic_b<Real>(b_, delta, coin(rng));
      }
    } else {
      b_tilde = b_;
    }
    std::shared_ptr<const matrix_t<Real>> a_tilde;
    if (plus_ && m == m_) a_tilde = sign > 0 ? plus_ : minus_;
    return OracleView<Real>(a_, std::move(m), sign, std::move(b_tilde), k, std::move(a_tilde));
  }

 private:
  NoiseModel model_;
  std::shared_ptr<const LinearOperator<Real>> a_;
  vector_t<Real> b_;
  std::size_t dense_cap_;
  std::shared_ptr<const NoiseMatrix<Real>> m_;
  std::shared_ptr<const matrix_t<Real>> plus_, minus_;  // A + M, A - M for dense A
  std::optional<vector_t<Real>> fixed_delta_;
};

/// One-shot form of NoiseOracle::view.
template <class Real>
OracleView<Real> oracle_view(const NoiseModel& model, const QuadraticProblem<Real>& problem,
                             const vector_t<Real>& x, std::size_t k) {
  return NoiseOracle<Real>(model, problem).view(x, k);
}

}  // namespace noisy_cg::noise
