#pragma once

// Vectors, symmetric PSD operators with prescribed spectra, and quadratic
// test problems f(x) = 1/2 <Ax, x> - <b, x> with a known minimizer.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace noisy_cg {

template <class Real>
using vector_t = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
template <class Real>
using matrix_t = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = vector_t<double>;
using Matrix = matrix_t<double>;

struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a dense object would exceed the configured storage cap.
struct capacity_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t default_dense_cap = 4000;

// Independent, reproducible random streams: one generator per
// (seed, stream, index) triple, so that e.g. the noise drawn at iteration k
// does not depend on how many draws happened before it.
namespace streams {
inline constexpr std::uint32_t problem = 1;
inline constexpr std::uint32_t orthogonal = 2;
inline constexpr std::uint32_t noise_matrix = 3;
inline constexpr std::uint32_t iteration = 4;
inline constexpr std::uint32_t fixed_magnitudes = 5;
}  // namespace streams

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream,
                                std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), stream,
                    static_cast<std::uint32_t>(index & 0xffffffffu),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

template <class Real>
vector_t<Real> gaussian_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  vector_t<Real> v(static_cast<Eigen::Index>(n));
  for (auto& e : v) e = Real(normal(rng));
  return v;
}

namespace linops {

using std::abs;
using std::sqrt;

inline void check_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b)
    throw dimension_error(std::string(what) + ": dimension mismatch (" +
                          std::to_string(a) + " vs " + std::to_string(b) + ")");
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

enum class Decay { geometric, power };

/// Eigenvalue profile lambda_i = max(lambda_max * decay(i), floor), i = 1..n,
/// with decay(i) = rate^(i-1) (geometric) or i^(-rate) (power).
struct SpectrumSpec {
  std::size_t n = 1;
  double lambda_max = 1.0;
  Decay decay = Decay::geometric;
  double rate = 0.5;  // ratio rho in (0,1) or exponent p > 0
  double floor = 0.0;

  /// Geometric profile whose smallest eigenvalue is lambda_max / condition.
  static SpectrumSpec geometric_with_condition(std::size_t n, double condition,
                                               double lambda_max = 1.0) {
    SpectrumSpec s;
    s.n = n;
    s.lambda_max = lambda_max;
    s.decay = Decay::geometric;
    s.rate = n > 1 ? std::pow(1.0 / condition, 1.0 / double(n - 1)) : 0.5;
    return s;
  }

  void validate() const {
    if (n < 1) throw std::invalid_argument("spectrum: n must be >= 1");
    if (!(lambda_max > 0) || !std::isfinite(lambda_max))
      throw std::invalid_argument("spectrum: lambda_max must be > 0");
    if (!(floor >= 0) || !std::isfinite(floor))
      throw std::invalid_argument("spectrum: floor must be >= 0");
    if (floor > lambda_max)
      throw std::invalid_argument("spectrum: floor exceeds lambda_max");
    if (decay == Decay::geometric && !(rate > 0 && rate < 1))
      throw std::invalid_argument("spectrum: geometric ratio must be in (0,1)");
    if (decay == Decay::power && !(rate > 0))
      throw std::invalid_argument("spectrum: power exponent must be > 0");
  }
};

/// Descending eigenvalues for `spec`.
inline std::vector<double> make_spectrum(const SpectrumSpec& spec) {
  spec.validate();
  std::vector<double> lambda(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double decay = spec.decay == Decay::geometric
                             ? std::pow(spec.rate, double(i))
                             : std::pow(double(i + 1), -spec.rate);
    lambda[i] = std::max(spec.lambda_max * decay, spec.floor);
  }
  return lambda;
}

/// lambda_1 / lambda_n; +inf when the smallest eigenvalue is zero.
inline double condition_number(const std::vector<double>& lambda) {
  if (lambda.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto [lo, hi] = std::minmax_element(lambda.begin(), lambda.end());
  if (*lo <= 0) return std::numeric_limits<double>::infinity();
  return *hi / *lo;
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

template <class Real>
struct Diagonal {
  vector_t<Real> eigenvalues;
};

template <class Real>
struct DenseSymmetric {
  matrix_t<Real> entries;
};

/// Symmetric positive semidefinite operator, stored either as its eigenvalues
/// (diagonal in the canonical basis) or as an explicit dense matrix.
template <class Real = double>
class LinearOperator {
 public:
  using representation = std::variant<Diagonal<Real>, DenseSymmetric<Real>>;

  static LinearOperator diagonal(vector_t<Real> eigenvalues) {
    if (eigenvalues.size() < 1)
      throw std::invalid_argument("operator: dimension must be >= 1");
    for (const auto& e : eigenvalues)
      if (!(e >= Real(0)) || !isfinite_(e))
        throw std::invalid_argument(
            "operator: diagonal entries must be finite and >= 0");
    const Real top = eigenvalues.maxCoeff();
    return LinearOperator(Diagonal<Real>{std::move(eigenvalues)}, top,
                          std::nullopt);
  }

  static LinearOperator diagonal(const std::vector<double>& eigenvalues) {
    vector_t<Real> v(static_cast<Eigen::Index>(eigenvalues.size()));
    for (std::size_t i = 0; i < eigenvalues.size(); ++i)
      v[Eigen::Index(i)] = Real(eigenvalues[i]);
    return diagonal(std::move(v));
  }

  /// Wraps an explicit matrix. Symmetry is checked to 1e-12 relative;
  /// positive semidefiniteness is the caller's responsibility unless
  /// `known_spectrum` is supplied.
  static LinearOperator dense(matrix_t<Real> entries,
                              std::optional<std::vector<double>> known_spectrum =
                                  std::nullopt) {
    if (entries.rows() < 1 || entries.rows() != entries.cols())
      throw dimension_error("operator: dense matrix must be square and nonempty");
    const Real scale = entries.cwiseAbs().maxCoeff();
    const Real asym = (entries - entries.transpose()).cwiseAbs().maxCoeff();
    if (asym > Real(1e-12) * scale)
      throw std::invalid_argument("operator: dense matrix is not symmetric");
    Real top;
    if (known_spectrum && !known_spectrum->empty()) {
      if (known_spectrum->size() != std::size_t(entries.rows()))
        throw dimension_error("operator: spectrum size does not match matrix");
      top = Real(*std::max_element(known_spectrum->begin(), known_spectrum->end()));
    } else {
      top = entries.norm();  // Frobenius norm bounds the 2-norm
    }
    return LinearOperator(DenseSymmetric<Real>{std::move(entries)}, top,
                          std::move(known_spectrum));
  }

  std::size_t dimension() const {
    return std::visit(
        [](const auto& r) -> std::size_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(r)>, Diagonal<Real>>)
            return std::size_t(r.eigenvalues.size());
          else
            return std::size_t(r.entries.rows());
        },
        rep_);
  }

  bool is_diagonal() const { return std::holds_alternative<Diagonal<Real>>(rep_); }
  const representation& rep() const { return rep_; }

  /// Upper bound on ||A||_2; exact when the spectrum is known.
  Real norm_bound() const { return norm_bound_; }

  /// Eigenvalues, when known from construction.
  std::optional<std::vector<double>> spectrum() const {
    if (const auto* d = std::get_if<Diagonal<Real>>(&rep_)) {
      std::vector<double> out(std::size_t(d->eigenvalues.size()));
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<double>(d->eigenvalues[Eigen::Index(i)]);
      std::sort(out.rbegin(), out.rend());
      return out;
    }
    return spectrum_;
  }

  void apply_into(const vector_t<Real>& x, vector_t<Real>& y) const {
    check_same_size(x.size(), Eigen::Index(dimension()), "apply");
    if (const auto* d = std::get_if<Diagonal<Real>>(&rep_))
      y = d->eigenvalues.cwiseProduct(x);
    else
      y.noalias() = std::get<DenseSymmetric<Real>>(rep_).entries * x;
  }

  vector_t<Real> apply(const vector_t<Real>& x) const {
    vector_t<Real> y;
    apply_into(x, y);
    return y;
  }

  /// Dense copy of the operator (for diagonal operators, the diagonal matrix).
  matrix_t<Real> to_dense() const {
    if (const auto* d = std::get_if<Diagonal<Real>>(&rep_))
      return d->eigenvalues.asDiagonal();
    return std::get<DenseSymmetric<Real>>(rep_).entries;
  }

 private:
  LinearOperator(representation rep, Real top,
                 std::optional<std::vector<double>> spectrum)
      : rep_(std::move(rep)), norm_bound_(top), spectrum_(std::move(spectrum)) {}

  static bool isfinite_(const Real& v) {
    using std::isfinite;
    return isfinite(v);
  }

  representation rep_;
  Real norm_bound_;
  std::optional<std::vector<double>> spectrum_;
};

template <class Real>
vector_t<Real> apply(const LinearOperator<Real>& a, const vector_t<Real>& x) {
  return a.apply(x);
}

/// Seeded random orthogonal matrix: Householder QR of a standard Gaussian
/// matrix, with column signs fixed so that R has a positive diagonal.
template <class Real = double>
matrix_t<Real> random_orthogonal(std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed, streams::orthogonal);
  std::normal_distribution<double> normal;
  matrix_t<Real> g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  // Row-by-row fill; the draw order is the same for every Real.
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = Real(normal(rng));
  Eigen::HouseholderQR<matrix_t<Real>> qr(g);
  matrix_t<Real> q = qr.householderQ();
  const matrix_t<Real>& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < Real(0)) q.col(j) = -q.col(j);
  return q;
}

/// A = Q diag(eigenvalues) Q^T with Q = random_orthogonal(n, seed).
template <class Real = double>
LinearOperator<Real> make_dense_spd(const std::vector<double>& eigenvalues,
                                    std::uint64_t seed,
                                    std::size_t dense_cap = default_dense_cap) {
  const std::size_t n = eigenvalues.size();
  if (n < 1) throw std::invalid_argument("make_dense_spd: empty spectrum");
  if (n > dense_cap)
    throw capacity_error("make_dense_spd: n = " + std::to_string(n) +
                         " exceeds dense cap " + std::to_string(dense_cap));
  for (double e : eigenvalues)
    if (!(e >= 0)) throw std::invalid_argument("make_dense_spd: negative eigenvalue");
  const matrix_t<Real> q = random_orthogonal<Real>(n, seed);
  vector_t<Real> lambda(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) lambda[Eigen::Index(i)] = Real(eigenvalues[i]);
  matrix_t<Real> a = q * lambda.asDiagonal() * q.transpose();
  a = (a + a.transpose()).eval() * Real(0.5);
  return LinearOperator<Real>::dense(std::move(a), eigenvalues);
}

// ---------------------------------------------------------------------------
// Problems
// ---------------------------------------------------------------------------

template <class Real = double>
struct QuadraticProblem {
  std::shared_ptr<const LinearOperator<Real>> a;
  vector_t<Real> b;
  vector_t<Real> x_star;
  vector_t<Real> x0;
  double r = 0;  // ||x_star - x0||_2
  double l = 0;  // ||A||_2 (largest eigenvalue when known)

  std::size_t dimension() const { return std::size_t(b.size()); }

  /// b is defined as A x_star, so the residual at x_star is exactly zero.
  static QuadraticProblem from_solution(std::shared_ptr<const LinearOperator<Real>> a,
                                        vector_t<Real> x_star,
                                        std::optional<vector_t<Real>> x0 = std::nullopt) {
    if (!a) throw std::invalid_argument("problem: null operator");
    check_same_size(x_star.size(), Eigen::Index(a->dimension()), "problem");
    QuadraticProblem p;
    p.a = std::move(a);
    p.b = p.a->apply(x_star);
    p.x0 = x0 ? std::move(*x0) : vector_t<Real>::Zero(x_star.size());
    check_same_size(p.x0.size(), x_star.size(), "problem x0");
    p.x_star = std::move(x_star);
    p.r = static_cast<double>((p.x_star - p.x0).norm());
    p.l = static_cast<double>(p.a->norm_bound());
    return p;
  }

  Real f_star() const { return Real(-0.5) * b.dot(x_star); }
};

/// x_star = R u for a seeded uniform random unit vector u; b = A x_star; x0 = 0.
template <class Real>
QuadraticProblem<Real> make_problem(std::shared_ptr<const LinearOperator<Real>> a,
                                    double r, std::uint64_t seed) {
  if (!(r >= 0)) throw std::invalid_argument("make_problem: R must be >= 0");
  if (!a) throw std::invalid_argument("make_problem: null operator");
  auto rng = make_rng(seed, streams::problem);
  vector_t<Real> u = gaussian_vector<Real>(a->dimension(), rng);
  Real norm = u.norm();
  while (norm == Real(0)) {
    u = gaussian_vector<Real>(a->dimension(), rng);
    norm = u.norm();
  }
  vector_t<Real> x_star = u * (Real(r) / norm);
  return QuadraticProblem<Real>::from_solution(std::move(a), std::move(x_star));
}

template <class Real>
QuadraticProblem<Real> make_problem(const LinearOperator<Real>& a, double r,
                                    std::uint64_t seed) {
  return make_problem(std::make_shared<const LinearOperator<Real>>(a), r, seed);
}

/// Noiseless objective 1/2 <Ax, x> - <b, x>.
template <class Real>
Real f_value(const QuadraticProblem<Real>& p, const vector_t<Real>& x) {
  check_same_size(x.size(), p.b.size(), "f_value");
  return Real(0.5) * p.a->apply(x).dot(x) - p.b.dot(x);
}

/// Noiseless gradient Ax - b.
template <class Real>
vector_t<Real> gradient(const QuadraticProblem<Real>& p, const vector_t<Real>& x) {
  check_same_size(x.size(), p.b.size(), "gradient");
  return p.a->apply(x) - p.b;
}

}  // namespace linops
}  // namespace noisy_cg
