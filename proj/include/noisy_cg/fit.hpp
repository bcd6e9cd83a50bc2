#pragma once

// Ordinary least squares for the scaling-law models used by the sweeps.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace noisy_cg::fit {

enum class Model {
  linear_origin,  // y = c1 x
  affine,         // y = c0 + c1 x
  quadratic,      // y = c0 + c2 x^2
  power_law       // log y = c0 + c1 log x
};

enum class FitStatus { ok, insufficient_points, insufficient_spread, degenerate, nonpositive_data };

inline const char* to_string(Model m) {
  switch (m) {
    case Model::linear_origin: return "linear_origin";
    case Model::affine: return "affine";
    case Model::quadratic: return "quadratic";
    case Model::power_law: return "power_law";
  }
  return "?";
}

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::ok: return "ok";
    case FitStatus::insufficient_points: return "insufficient_points";
    case FitStatus::insufficient_spread: return "insufficient_spread";
    case FitStatus::degenerate: return "degenerate";
    case FitStatus::nonpositive_data: return "nonpositive_data";
  }
  return "?";
}

inline std::size_t parameter_count(Model m) { return m == Model::linear_origin ? 1 : 2; }

/// max(2, polynomial degree + 1).
inline std::size_t min_points(Model m) { return m == Model::quadratic ? 3 : 2; }

struct FitReport {
  Model model = Model::affine;
  FitStatus status = FitStatus::ok;
  // coefficients[j] multiplies x^j; for power_law, c0 = log prefactor and c1 = exponent.
  std::array<double, 3> coefficients{0, 0, 0};
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  double loglog_slope = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;

  bool ok() const { return status == FitStatus::ok; }

  double predict(double x) const {
    const auto& c = coefficients;
    switch (model) {
      case Model::linear_origin: return c[1] * x;
      case Model::affine: return c[0] + c[1] * x;
      case Model::quadratic: return c[0] + c[2] * x * x;
      case Model::power_law: return std::exp(c[0]) * std::pow(x, c[1]);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }
};

/// 1 - SS_res / SS_tot clamped to [0, 1]. With SS_tot = 0 the fit is perfect
/// iff the residual vanishes.
inline double r_squared(const std::vector<double>& y, const std::vector<double>& yhat) {
  if (y.size() != yhat.size() || y.empty())
    throw std::invalid_argument("r_squared: size mismatch");
  double mean = 0;
  for (double v : y) mean += v;
  mean /= double(y.size());
  double ss_res = 0, ss_tot = 0, scale = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
    scale = std::max(scale, std::abs(y[i]));
  }
  if (ss_tot <= 0 || ss_tot <= 1e-30 * scale * scale * double(y.size()))
    return ss_res <= 1e-24 * std::max(1.0, scale * scale) ? 1.0 : 0.0;
  return std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
}

inline FitReport fit_least_squares(const std::vector<double>& xs, const std::vector<double>& ys,
                                   Model model) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit: xs and ys differ in length");
  FitReport rep;
  rep.model = model;
  rep.points = xs.size();

  const std::size_t p = parameter_count(model);
  if (xs.size() < min_points(model)) {
    rep.status = FitStatus::insufficient_points;
    return rep;
  }
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
      throw std::invalid_argument("fit: non-finite data");

  std::vector<double> u = xs, v = ys;
  if (model == Model::power_law) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!(xs[i] > 0) || !(ys[i] > 0)) {
        rep.status = FitStatus::nonpositive_data;
        return rep;
      }
      u[i] = std::log(xs[i]);
      v[i] = std::log(ys[i]);
    }
  }

  const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  const double span = *hi - *lo;
  if (!(span > 1e-12 * std::max(1.0, std::max(std::abs(*lo), std::abs(*hi))))) {
    rep.status = FitStatus::insufficient_spread;
    return rep;
  }

  const Eigen::Index m = Eigen::Index(u.size());
  Eigen::MatrixXd design(m, Eigen::Index(p));
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x = u[std::size_t(i)];
    rhs[i] = v[std::size_t(i)];
    switch (model) {
      case Model::linear_origin: design(i, 0) = x; break;
      case Model::affine:
      case Model::power_law:
        design(i, 0) = 1.0;
        design(i, 1) = x;
        break;
      case Model::quadratic:
        design(i, 0) = 1.0;
        design(i, 1) = x * x;
        break;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-12);
  if (qr.rank() < Eigen::Index(p)) {
    rep.status = FitStatus::degenerate;
    return rep;
  }
  const Eigen::VectorXd c = qr.solve(rhs);

  switch (model) {
    case Model::linear_origin: rep.coefficients = {0.0, c[0], 0.0}; break;
    case Model::affine: rep.coefficients = {c[0], c[1], 0.0}; break;
    case Model::quadratic: rep.coefficients = {c[0], 0.0, c[1]}; break;
    case Model::power_law:
      rep.coefficients = {c[0], c[1], 0.0};
      rep.loglog_slope = c[1];
      break;
  }

  std::vector<double> fitted(u.size());
  const Eigen::VectorXd yhat = design * c;
  for (std::size_t i = 0; i < u.size(); ++i) fitted[i] = yhat[Eigen::Index(i)];
  rep.r_squared = r_squared(v, fitted);
  return rep;
}

}  // namespace noisy_cg::fit
