// Acceptance report: one PASS/FAIL line per criterion, INFO lines for context.
// Exit status is the number of failed criteria (capped at 100).

#include <noisy_cg/config.hpp>
#include <noisy_cg/experiments.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace noisy_cg;
using experiments::ExperimentConfig;
using linops::QuadraticProblem;
using noise::NoiseModel;
using solvers::Status;
namespace fs = std::filesystem;

namespace {

int failures = 0;

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void report(bool ok, const std::string& name, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

void info(const std::string& name, const std::string& detail) {
  std::cout << "INFO " << name << ": " << detail << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path preset_path(const std::string& name) {
  return fs::path(NOISY_CG_SOURCE_DIR) / "presets" / (name + ".cfg");
}

// ---------------------------------------------------------------------------
// exact CG

struct ExactOutcome {
  double worst_rel = 0;       // max over seeds of ||x_N - x_direct|| / ||x_direct||
  std::size_t worst_n = 0;    // max over seeds of the first N reaching 1e-8
  bool all_reached = true;
};

ExactOutcome exact_cg(const linops::SpectrumSpec& spec, std::size_t budget) {
  ExactOutcome out;
  const auto lambda = linops::make_spectrum(spec);
  auto a = std::make_shared<const linops::LinearOperator<double>>(
      linops::make_dense_spd<double>(lambda, 17));
  const Eigen::LDLT<Matrix> ldlt(a->to_dense());
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = linops::make_problem(a, 1.0, seed);
    const Vector x_direct = ldlt.solve(p.b);
    const double ref = x_direct.norm();
    const auto t = solvers::cg_solve(p, NoiseModel::exact(), budget);
    std::size_t hit = t.records.size();
    for (std::size_t k = 0; k < t.records.size() && hit == t.records.size(); ++k)
      if (t.records[k].arg_error <= 1e-8 * p.x_star.norm()) hit = k;
    if (hit == t.records.size()) {
      out.all_reached = false;
      double best = INFINITY;
      for (const auto& r : t.records) best = std::min(best, r.arg_error / p.x_star.norm());
      out.worst_rel = std::max(out.worst_rel, best);
      out.worst_n = budget;
      continue;
    }
    const auto tn = solvers::cg_solve(p, NoiseModel::exact(), hit);
    out.worst_rel = std::max(out.worst_rel, (tn.x_final - x_direct).norm() / ref);
    out.worst_n = std::max(out.worst_n, hit);
  }
  return out;
}

void criterion_exact_cg() {
  const auto t0 = std::chrono::steady_clock::now();
  linops::SpectrumSpec floored;
  floored.n = 200;
  floored.lambda_max = 1.0;
  floored.rate = 0.5;
  floored.floor = 1e-6;
  const double cond = linops::condition_number(linops::make_spectrum(floored));
  const auto r = exact_cg(floored, 205);
  const double secs = seconds_since(t0);
  report(r.all_reached && r.worst_rel <= 1e-8 && secs < 1.0, "exact_cg",
         "n=200 geometric rate 0.5 floored at cond " + num(cond) + ", 5 seeds, max N=" +
             std::to_string(r.worst_n) + ", max ||x_N-x_direct||/||x_direct||=" + num(r.worst_rel) +
             ", " + num(secs, 3) + " s");

  const auto pure = exact_cg(linops::SpectrumSpec::geometric_with_condition(200, 1e6, 1.0), 205);
  info("exact_cg_unfloored",
       "rate (1e-6)^(1/199) without floor: " +
           std::string(pure.all_reached ? "reached 1e-8 by N=" + std::to_string(pure.worst_n)
                                        : "1e-8 not reached in 205 iterations, best relative error " +
                                              num(pure.worst_rel)));
}

// ---------------------------------------------------------------------------
// rotation invariance

double rotation_gap(const std::vector<double>& lambda, std::size_t iterations) {
  double worst = 0;
  const Matrix q = linops::random_orthogonal<double>(lambda.size(), 23);
  auto diag = std::make_shared<const linops::LinearOperator<double>>(
      linops::LinearOperator<double>::diagonal(lambda));
  auto dense = std::make_shared<const linops::LinearOperator<double>>(
      linops::make_dense_spd<double>(lambda, 23));
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto pd = linops::make_problem(diag, 1.0, seed);
    const auto pr = QuadraticProblem<double>::from_solution(dense, Vector(q * pd.x_star));
    const auto td = solvers::cg_solve(pd, NoiseModel::exact(), iterations);
    const auto tr = solvers::cg_solve(pr, NoiseModel::exact(), iterations);
    const std::size_t m = std::min(td.records.size(), tr.records.size());
    for (std::size_t k = 0; k < m; ++k) {
      const double a = td.records[k].f_true, b = tr.records[k].f_true;
      const double scale = std::max(std::abs(a), std::abs(b));
      if (scale > 0) worst = std::max(worst, std::abs(a - b) / scale);
    }
    if (td.records.size() != tr.records.size()) worst = INFINITY;
  }
  return worst;
}

void criterion_rotation() {
  const auto t0 = std::chrono::steady_clock::now();
  linops::SpectrumSpec floored;
  floored.n = 200;
  floored.rate = 0.5;
  floored.floor = 1e-6;
  const double g = rotation_gap(linops::make_spectrum(floored), 100);
  const double secs = seconds_since(t0);
  report(g <= 1e-8 && secs < 5.0, "rotation_invariance",
         "n=200 cond 1e6, 3 seeds, 100 iterations, max relative f_true difference " + num(g) +
             " (limit 1e-8), " + num(secs, 3) + " s");
  const double gu = rotation_gap(
      linops::make_spectrum(linops::SpectrumSpec::geometric_with_condition(200, 1e6, 1.0)), 100);
  info("rotation_invariance_unfloored", "max relative difference " + num(gu));
  const double gm = rotation_gap(
      linops::make_spectrum(linops::SpectrumSpec::geometric_with_condition(200, 50.0, 1.0)), 100);
  info("rotation_invariance_cond50", "max relative difference " + num(gm));
}

// ---------------------------------------------------------------------------
// noise construction

double spectral_norm(const Matrix& m) {
  std::mt19937_64 rng(99);
  Vector v = gaussian_vector<double>(std::size_t(m.cols()), rng);
  v.normalize();
  double s = 0;
  for (int it = 0; it < 500; ++it) {
    Vector w = m.transpose() * (m * v);
    const double nw = w.norm();
    if (nw == 0) return 0;
    const double next = std::sqrt(nw);
    v = w / nw;
    if (std::abs(next - s) <= 1e-15 * next) {
      s = next;
      break;
    }
    s = next;
  }
  return s;
}

void criterion_noise() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_b = 0, worst_f = 0, worst_spec = 0;
  const double db = 0.1, da = 0.005;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    auto rng = make_rng(1000 + draw, streams::iteration);
    const Vector mags = noise::sample_noise_magnitudes<double>(1000, db, rng);
    worst_b = std::max(worst_b, std::abs(mags.norm() - db) / db);
    const auto m = noise::make_noise_matrix<double>(100, da, std::uint64_t(1000 + draw));
    worst_f = std::max(worst_f, std::abs(m.m.norm() - da) / da);
    worst_spec = std::max(worst_spec, spectral_norm(m.m) / da);
  }
  const double secs = seconds_since(t0);
  report(worst_b <= 1e-12 && worst_f <= 1e-12 && worst_spec <= 1 + 1e-12 && secs < 5.0,
         "noise_construction",
         "100 draws, max rel |‖Δ‖-δ_b|=" + num(worst_b) + ", max rel |‖M‖_F-δ_A|=" + num(worst_f) +
             ", max ‖M‖_2/δ_A=" + num(worst_spec) + ", " + num(secs, 3) + " s");
}

// ---------------------------------------------------------------------------
// presets: each is run twice; the first run feeds the statistical criteria

struct PresetRun {
  ExperimentConfig cfg;
  std::optional<experiments::TrajectoryResult> trajectory;
  std::optional<experiments::SweepResult> sweep;
  std::optional<experiments::CompareResult> compare;
  std::map<std::string, std::string> csv;
  double seconds = 0;
};

PresetRun run_preset(const ExperimentConfig& cfg) {
  PresetRun out;
  out.cfg = cfg;
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream a, b;
  switch (cfg.family) {
    case experiments::Family::trajectory:
      out.trajectory = experiments::run_trajectory(cfg);
      experiments::write_trajectory_csv(a, *out.trajectory);
      out.csv["trajectory.csv"] = a.str();
      break;
    case experiments::Family::sweep_delta:
    case experiments::Family::sweep_r:
      out.sweep = cfg.family == experiments::Family::sweep_r ? experiments::sweep_R(cfg)
                                                             : experiments::sweep_delta(cfg);
      experiments::write_sweep_csv(a, *out.sweep);
      experiments::write_fits_csv(b, *out.sweep);
      out.csv["sweep.csv"] = a.str();
      out.csv["fits.csv"] = b.str();
      break;
    case experiments::Family::compare:
      out.compare = experiments::compare_nesterov(cfg);
      experiments::write_compare_csv(a, *out.compare);
      out.csv["compare.csv"] = a.str();
      break;
  }
  out.seconds = seconds_since(t0);
  return out;
}

const std::vector<std::string> desk_presets = {
    "table1_adversarial",  "table1_stochastic",    "table1_matrix_noise",
    "table1_combined",     "table1_combined_adversarial",
    "table2_adversarial",  "table2_stochastic",    "table2_matrix_noise",
    "table3_matrix_noise", "table3_combined",      "table3_combined_adversarial",
    "stochastic_b",        "compare_nesterov"};

std::map<std::string, PresetRun> runs;

void run_all_presets() {
  bool identical = true;
  std::string mismatches;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& name : desk_presets) {
    const auto cfg = config::load_config(preset_path(name));
    ::setenv("NOISY_CG_WORKERS", "1", 1);
    auto first = run_preset(cfg);
    ::setenv("NOISY_CG_WORKERS", "3", 1);
    const auto second = run_preset(cfg);
    ::unsetenv("NOISY_CG_WORKERS");
    bool same = first.csv == second.csv;
    if (!same) {
      identical = false;
      mismatches += " " + name;
    }
    info("preset " + name, num(first.seconds, 4) + " s per run, csv " +
                               (same ? "identical" : "DIFFERENT") + " across reruns");
    runs.emplace(name, std::move(first));
  }
  report(identical, "determinism",
         std::to_string(desk_presets.size()) +
             " presets run twice (1 and 3 workers), CSV bytes " +
             (identical ? "identical" : "differ for" + mismatches) + ", " +
             num(seconds_since(t0), 4) + " s total");
}

// ---------------------------------------------------------------------------

void criterion_no_accumulation() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"table1_adversarial", "table1_stochastic", "table1_matrix_noise",
                           "table1_combined"}) {
    const auto& r = *runs.at(name).trajectory;
    double worst = 0;
    for (const auto& run : r.runs) {
      const double ratio = std::isnan(run.ratio) ? INFINITY : run.ratio;
      worst = std::max(worst, ratio);
      if (!(ratio <= 2.0)) ok = false;
    }
    detail += std::string(detail.empty() ? "" : ", ") + name + " max ratio " + num(worst) + " (" +
              std::to_string(r.runs.size()) + " runs)";
  }
  report(ok, "no_accumulation", detail + "; limit 2");
}

const fit::FitReport& need_fit(const experiments::SweepSeries& s, const std::string& name) {
  const auto* f = s.find_fit(name);
  if (!f) throw std::runtime_error("missing fit " + name + " for " + s.label);
  return *f;
}

void criterion_delta_b_linear() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"table2_adversarial", "table2_stochastic"}) {
    for (const auto& s : runs.at(name).sweep->series) {
      const auto& f = need_fit(s, "affine");
      ok = ok && f.ok() && f.r_squared >= 0.95;
      detail += std::string(detail.empty() ? "" : ", ") + name + " r2=" + num(f.r_squared) +
                " slope=" + num(f.coefficients[1]);
    }
  }
  report(ok, "delta_b_linear", detail + "; limit r2 >= 0.95");
}

void criterion_delta_a_linear() {
  const auto& sw = *runs.at("table2_matrix_noise").sweep;
  bool ok = true;
  std::string detail;
  std::map<double, double> slope_by_r;
  for (const auto& s : sw.series) {
    const auto& f = need_fit(s, "affine");
    ok = ok && f.ok() && f.r_squared >= 0.9;
    slope_by_r[s.points.front().spec.r] = f.coefficients[1];
    detail += std::string(detail.empty() ? "" : ", ") + s.label + " r2=" + num(f.r_squared) +
              " slope=" + num(f.coefficients[1]);
  }
  ok = ok && slope_by_r.size() == 2 && slope_by_r.count(10) && slope_by_r.count(50) &&
       slope_by_r.at(50) > slope_by_r.at(10);
  report(ok, "delta_a_linear", detail + "; limits r2 >= 0.9, slope(R=50) > slope(R=10)");
}

void criterion_r_quadratic() {
  const auto& sw = *runs.at("table3_matrix_noise").sweep;
  bool ok = !sw.series.empty();
  std::string detail;
  for (const auto& s : sw.series) {
    const auto& pl = need_fit(s, "power_law");
    const auto& q = need_fit(s, "quadratic");
    const auto& a = need_fit(s, "affine");
    ok = ok && pl.ok() && pl.loglog_slope >= 1.6 && pl.loglog_slope <= 2.4 && q.ok() && a.ok() &&
         q.r_squared >= a.r_squared;
    detail += std::string(detail.empty() ? "" : ", ") + s.label + " slope=" + num(pl.loglog_slope) +
              " r2 quadratic=" + num(q.r_squared, 6) + " affine=" + num(a.r_squared, 6);
  }
  report(ok, "r_quadratic", detail + "; limits slope in [1.6, 2.4], quadratic r2 >= affine r2");
}

void criterion_adversarial_vs_stochastic() {
  const auto& adv = runs.at("table2_adversarial").sweep->series.at(0);
  const auto& sto = runs.at("table2_stochastic").sweep->series.at(0);
  bool ok = adv.grid == sto.grid;
  std::size_t checked = 0;
  double min_ratio = INFINITY;
  for (std::size_t i = 0; ok && i < adv.grid.size(); ++i) {
    if (!(adv.grid[i] > 0)) continue;
    ++checked;
    min_ratio = std::min(min_ratio, adv.error_mean[i] / sto.error_mean[i]);
    if (!(adv.error_mean[i] >= sto.error_mean[i])) ok = false;
  }
  report(ok && checked > 0, "adversarial_ge_stochastic",
         std::to_string(checked) + " grid points with δ_b > 0, min adversarial/stochastic mean " +
             "plateau error " + num(min_ratio));
}

void criterion_cg_vs_nesterov() {
  const auto& c = *runs.at("compare_nesterov").compare;
  bool ok = !c.runs.empty();
  double lo = INFINITY, hi = 0;
  std::string iters;
  for (const auto& r : c.runs) {
    lo = std::min(lo, r.ratio());
    hi = std::max(hi, r.ratio());
    ok = ok && r.ratio() >= 5.0;
    iters += " " + std::to_string(r.cg_iterations) + "/" + std::to_string(r.nesterov_iterations) +
             (r.nesterov_reached ? "" : "+");
  }
  report(ok, "cg_vs_nesterov",
         "iteration ratio nesterov/cg in [" + num(lo) + ", " + num(hi) + "], cg/nesterov per seed:" +
             iters + "; limit 5");
}

void criterion_nemirovsky() {
  const auto t0 = std::chrono::steady_clock::now();
  // (a) noisy runs with the criterion enabled
  std::size_t stopped = 0, total = 0, violations = 0;
  double worst = 0;
  for (const char* name : {"table1_combined", "table1_combined_adversarial"}) {
    auto cfg = config::load_config(preset_path(name), {"solver.stop=nemirovsky"});
    const auto r = experiments::run_trajectory(cfg);
    const auto a = experiments::build_operator(cfg.problem);
    for (const auto& run : r.runs) {
      ++total;
      if (run.trace.status != Status::nemirovsky_stop) continue;
      ++stopped;
      const auto p = linops::make_problem(a, run.spec.r, run.spec.seed);
      const auto model = cfg.noise.model(run.spec.seed, run.spec.delta_a, run.spec.delta_b);
      noise::NoiseOracle<double> oracle(model, p);
      const Vector& x = run.trace.x_final;
      const Vector exact_g = a->apply(x) - p.b;
      const auto view = oracle.view(x, run.trace.iterations(), &exact_g);
      const double res = (view.apply(x) - view.b_tilde()).norm();
      const double bound = 2 * (run.spec.delta_a * x.norm() + run.spec.delta_b);
      worst = std::max(worst, res / bound);
      if (!(res <= bound)) ++violations;
    }
  }
  // (b) exact data, deltas zero: grad_norm must fire first
  std::size_t exact_total = 0, exact_tol = 0;
  for (double cond : {1e2, 1e4, 1e6}) {
    const auto lambda =
        linops::make_spectrum(linops::SpectrumSpec::geometric_with_condition(200, cond, 1.0));
    auto a = std::make_shared<const linops::LinearOperator<double>>(
        linops::make_dense_spd<double>(lambda, 5));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto p = linops::make_problem(a, 10.0, seed);
      const auto rule = solvers::StopRule::composite(
          {solvers::StopRule::nemirovsky(0, 0), solvers::StopRule::grad_norm(1e-10)});
      const auto t = solvers::cg_solve(p, NoiseModel::exact(), rule, 5000);
      ++exact_total;
      if (t.status == Status::tolerance_reached) ++exact_tol;
    }
  }
  report(stopped > 0 && violations == 0 && exact_tol == exact_total, "nemirovsky_stop",
         std::to_string(stopped) + "/" + std::to_string(total) +
             " combined-noise runs stopped by the rule, " + std::to_string(violations) +
             " bound violations (max residual/bound " + num(worst) + "); exact runs ending " +
             "ToleranceReached " + std::to_string(exact_tol) + "/" + std::to_string(exact_total) +
             ", " + num(seconds_since(t0), 4) + " s");
}

void guarded(const char* name, const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(false, name, std::string("error: ") + e.what());
  }
}

}  // namespace

int main() {
  std::cout << "workers: " << experiments::worker_count() << std::endl;
  guarded("exact_cg", criterion_exact_cg);
  guarded("rotation_invariance", criterion_rotation);
  guarded("noise_construction", criterion_noise);
  guarded("nemirovsky_stop", criterion_nemirovsky);
  guarded("determinism", run_all_presets);
  guarded("no_accumulation", criterion_no_accumulation);
  guarded("delta_b_linear", criterion_delta_b_linear);
  guarded("delta_a_linear", criterion_delta_a_linear);
  guarded("r_quadratic", criterion_r_quadratic);
  guarded("adversarial_ge_stochastic", criterion_adversarial_vs_stochastic);
  guarded("cg_vs_nesterov", criterion_cg_vs_nesterov);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return std::min(failures, 100);
}
