#pragma once

// Conjugate gradients and accelerated gradient driven by an inexact oracle.
//
// The iteration only ever sees (A~_k, b~_k) from the oracle; the true data are
// used for the recorded diagnostics and, for the adversarial model, to pick
// the perturbation signs.

#include "linops.hpp"
#include "noise.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace noisy_cg::solvers {

using linops::QuadraticProblem;
using noise::NoiseModel;

enum class Status { max_iter, tolerance_reached, nemirovsky_stop, breakdown_detected };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::max_iter: return "MaxIter";
    case Status::tolerance_reached: return "ToleranceReached";
    case Status::nemirovsky_stop: return "NemirovskyStop";
    case Status::breakdown_detected: return "BreakdownDetected";
  }
  return "?";
}

struct IterationRecord {
  std::size_t k = 0;
  double f_true = 0;         // f(x_k) for the true A, b
  double f_scaled = 0;       // (f(x_k) - f*) / (f(x_0) - f*)
  double residual_norm = 0;  // ||A x_k - b||
  double arg_error = 0;      // ||x_k - x*||
  double step_alpha = 0;     // step that produced x_k (0 for k = 0)
  bool restarted = false;
};

struct SolverTrace {
  std::vector<IterationRecord> records;
  Status status = Status::max_iter;
  std::size_t restarts = 0;
  // ||A~ x_N - b~|| for the oracle of the terminal check and ||x_N||.
  double final_noisy_residual = 0;
  double final_x_norm = 0;
  double f_star = 0;
  Vector x_final;

  std::size_t iterations() const { return records.empty() ? 0 : records.size() - 1; }
  const IterationRecord& last() const { return records.back(); }
};

/// Thrown on a non-finite step, direction or iterate.
struct numerical_error : std::runtime_error {
  numerical_error(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " at iteration " + std::to_string(iteration)),
        iteration(iteration) {}
  std::size_t iteration;
};

// ---------------------------------------------------------------------------
// Stopping rules

struct StopState {
  std::size_t k = 0;
  double direction_norm = 0;  // ||d_k||
  double noisy_residual = 0;  // ||A~ x_k - b~||
  double x_norm = 0;          // ||x_k||
};

struct StopRule {
  enum class Kind { grad_norm, max_iter, nemirovsky, composite };

  Kind kind = Kind::max_iter;
  double eps = 0;
  std::size_t n_max = 1;
  double delta_a = 0;
  double delta_b = 0;
  std::vector<StopRule> members;

  static StopRule grad_norm(double eps) {
    StopRule r;
    r.kind = Kind::grad_norm;
    r.eps = eps;
    r.validate();
    return r;
  }
  static StopRule max_iter(std::size_t n_max) {
    StopRule r;
    r.kind = Kind::max_iter;
    r.n_max = n_max;
    r.validate();
    return r;
  }
  static StopRule nemirovsky(double delta_a, double delta_b) {
    StopRule r;
    r.kind = Kind::nemirovsky;
    r.delta_a = delta_a;
    r.delta_b = delta_b;
    r.validate();
    return r;
  }
  static StopRule composite(std::vector<StopRule> members) {
    StopRule r;
    r.kind = Kind::composite;
    r.members = std::move(members);
    r.validate();
    return r;
  }
  /// A rule that never fires; the solver then runs to N_max.
  static StopRule none() { return composite({}); }

  void validate() const {
    switch (kind) {
      case Kind::grad_norm:
        if (!(eps > 0)) throw std::invalid_argument("stop rule: eps must be > 0");
        break;
      case Kind::max_iter:
        if (n_max < 1) throw std::invalid_argument("stop rule: N_max must be >= 1");
        break;
      case Kind::nemirovsky:
        if (!(delta_a >= 0) || !(delta_b >= 0))
          throw std::invalid_argument("stop rule: deltas must be >= 0");
        break;
      case Kind::composite:
        for (const auto& m : members) m.validate();
        break;
    }
  }

  double nemirovsky_threshold(double x_norm) const {
    return 2.0 * (delta_a * x_norm + delta_b);
  }
};

/// The status of the first member that fires, in member order.
inline std::optional<Status> fired(const StopRule& rule, const StopState& s) {
  switch (rule.kind) {
    case StopRule::Kind::grad_norm:
      if (s.direction_norm < rule.eps) return Status::tolerance_reached;
      return std::nullopt;
    case StopRule::Kind::max_iter:
      if (s.k >= rule.n_max) return Status::max_iter;
      return std::nullopt;
    case StopRule::Kind::nemirovsky:
      if (s.noisy_residual <= rule.nemirovsky_threshold(s.x_norm))
        return Status::nemirovsky_stop;
      return std::nullopt;
    case StopRule::Kind::composite:
      for (const auto& m : rule.members)
        if (auto st = fired(m, s)) return st;
      return std::nullopt;
  }
  return std::nullopt;
}

inline bool check_stop(const StopRule& rule, const StopState& s) {
  return fired(rule, s).has_value();
}

// ---------------------------------------------------------------------------

enum class BetaFormula {
  conjugacy,       // g_{i+1}^T A~ d_i / d_i^T A~ d_i
  fletcher_reeves  // ||g_{i+1}||^2 / ||g_i||^2
};

inline const char* to_string(BetaFormula b) {
  return b == BetaFormula::conjugacy ? "conjugacy" : "fletcher_reeves";
}

struct CgOptions {
  BetaFormula beta = BetaFormula::conjugacy;
  double curvature_tol = 1e-14;
  std::size_t dense_cap = default_dense_cap;
};

namespace detail {

template <class Real>
class Recorder {
 public:
  Recorder(const QuadraticProblem<Real>& p, SolverTrace& trace, std::size_t reserve)
      : p_(p), trace_(trace) {
    f_star_ = p.f_star();
    trace_.f_star = static_cast<double>(f_star_);
    trace_.records.reserve(reserve + 1);
  }

  /// Records x_k and leaves A x_k in `ax`.
  void record(std::size_t k, const vector_t<Real>& x, double alpha, bool restarted) {
    p_.a->apply_into(x, ax);
    const Real f = Real(0.5) * ax.dot(x) - p_.b.dot(x);
    if (k == 0) gap0_ = f - f_star_;
    IterationRecord r;
    r.k = k;
    r.f_true = static_cast<double>(f);
    r.f_scaled = gap0_ > Real(0) ? static_cast<double>((f - f_star_) / gap0_) : 0.0;
    r.residual_norm = static_cast<double>((ax - p_.b).norm());
    r.arg_error = static_cast<double>((x - p_.x_star).norm());
    r.step_alpha = alpha;
    r.restarted = restarted;
    if (!std::isfinite(r.f_true)) throw numerical_error("non-finite objective", k);
    trace_.records.push_back(r);
  }

  void finish(const vector_t<Real>& x, Status status, double noisy_residual) {
    trace_.status = status;
    trace_.final_noisy_residual = noisy_residual;
    trace_.final_x_norm = static_cast<double>(x.norm());
    trace_.x_final = x.template cast<double>();
  }

  vector_t<Real> ax;

 private:
  const QuadraticProblem<Real>& p_;
  SolverTrace& trace_;
  Real f_star_{0};
  Real gap0_{0};
};

template <class Real>
bool all_finite(const vector_t<Real>& v) {
  using std::isfinite;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!isfinite(v[i])) return false;
  return true;
}

}  // namespace detail

/// Conjugate gradients with one oracle call per iteration. At iteration k the
/// oracle yields (A~_k, b~_k); g_k = A~_k x_k - b~_k and the direction update
/// uses A~_{k-1} d_{k-1} from the previous step.
template <class Real>
SolverTrace cg_solve(const QuadraticProblem<Real>& problem, const NoiseModel& model,
                     const StopRule& stop, std::size_t n_max, const CgOptions& opt = {}) {
  stop.validate();
  const std::size_t n = problem.dimension();
  noise::NoiseOracle<Real> oracle(model, problem, opt.dense_cap);

  SolverTrace trace;
  detail::Recorder<Real> rec(problem, trace, n_max);
  vector_t<Real> x = problem.x0;
  rec.record(0, x, 0.0, false);

  vector_t<Real> g(n), d(n), ad(n), exact_g(n);
  Real dad_prev(0), g_prev_sq(0);
  bool have_dir = false;

  for (std::size_t k = 0;; ++k) {
    exact_g = rec.ax - problem.b;
    const auto view = oracle.view(x, k, &exact_g);
    view.apply_into(x, g);
    g -= view.b_tilde();
    const Real g_sq = g.squaredNorm();

    if (!have_dir) {
      d = -g;
    } else {
      Real beta = opt.beta == BetaFormula::conjugacy ? g.dot(ad) / dad_prev : g_sq / g_prev_sq;
      d = -g + beta * d;
    }
    if (!detail::all_finite(d)) throw numerical_error("non-finite direction", k);

    StopState st;
    st.k = k;
    st.direction_norm = static_cast<double>(d.norm());
    {
      using std::sqrt;
      st.noisy_residual = static_cast<double>(sqrt(g_sq));
    }
    st.x_norm = static_cast<double>(x.norm());
    if (auto s = fired(stop, st)) {
      rec.finish(x, *s, st.noisy_residual);
      break;
    }
    if (k >= n_max) {
      rec.finish(x, Status::max_iter, st.noisy_residual);
      break;
    }
    if (g_sq == Real(0)) {
      rec.finish(x, Status::tolerance_reached, 0.0);
      break;
    }

    view.apply_into(d, ad);
    Real dad = d.dot(ad);
    bool restarted = false;
    if (!(dad > Real(opt.curvature_tol) * d.squaredNorm())) {
      d = -g;
      view.apply_into(d, ad);
      dad = d.dot(ad);
      restarted = true;
      ++trace.restarts;
      if (!(dad > Real(opt.curvature_tol) * d.squaredNorm())) {
        rec.finish(x, Status::breakdown_detected, st.noisy_residual);
        break;
      }
    }
    const Real alpha = -d.dot(g) / dad;
    {
      using std::isfinite;
      if (!isfinite(alpha)) throw numerical_error("non-finite step", k);
    }
    x += alpha * d;
    if (!detail::all_finite(x)) throw numerical_error("non-finite iterate", k + 1);
    rec.record(k + 1, x, static_cast<double>(alpha), restarted);

    dad_prev = dad;
    g_prev_sq = g_sq;
    have_dir = true;
  }
  return trace;
}

template <class Real>
SolverTrace cg_solve(const QuadraticProblem<Real>& problem, const NoiseModel& model,
                     std::size_t n_max, const CgOptions& opt = {}) {
  return cg_solve(problem, model, StopRule::none(), n_max, opt);
}

/// Accelerated gradient with constant step 1/L and momentum (k-1)/(k+2):
/// y_k = x_k + (k-1)/(k+2) (x_k - x_{k-1}),  x_{k+1} = y_k - (A~_k y_k - b~_k) / L.
template <class Real>
SolverTrace nesterov_solve(const QuadraticProblem<Real>& problem, const NoiseModel& model,
                           std::size_t n_max, const StopRule& stop = StopRule::none(),
                           std::size_t dense_cap = default_dense_cap) {
  stop.validate();
  if (!(problem.l > 0)) throw std::invalid_argument("nesterov: L must be > 0");
  const std::size_t n = problem.dimension();
  noise::NoiseOracle<Real> oracle(model, problem, dense_cap);

  SolverTrace trace;
  detail::Recorder<Real> rec(problem, trace, n_max);
  vector_t<Real> x = problem.x0, x_prev = x, y = x;
  rec.record(0, x, 0.0, false);
  const Real step = Real(1) / Real(problem.l);

  vector_t<Real> g(n), ay(n), exact_g(n);
  for (std::size_t k = 0;; ++k) {
    if (k > 0) {
      const Real mom = Real(double(k) - 1) / Real(double(k) + 2);
      y = x + mom * (x - x_prev);
    } else {
      y = x;
    }
    problem.a->apply_into(y, ay);
    exact_g = ay - problem.b;
    const auto view = oracle.view(y, k, &exact_g);
    view.apply_into(y, g);
    g -= view.b_tilde();

    StopState st;
    st.k = k;
    st.direction_norm = static_cast<double>(g.norm());
    st.noisy_residual = st.direction_norm;
    st.x_norm = static_cast<double>(y.norm());
    if (auto s = fired(stop, st)) {
      rec.finish(x, *s, st.noisy_residual);
      break;
    }
    if (k >= n_max) {
      rec.finish(x, Status::max_iter, st.noisy_residual);
      break;
    }
    x_prev = x;
    x = y - step * g;
    if (!detail::all_finite(x)) throw numerical_error("non-finite iterate", k + 1);
    rec.record(k + 1, x, static_cast<double>(step), false);
  }
  return trace;
}

}  // namespace noisy_cg::solvers
