#pragma once

// Experiment families: trajectories, delta sweeps, R sweeps and the
// CG / accelerated-gradient comparison. All runs are seeded; grid points and
// seeds execute on a bounded worker pool and results are assembled in grid order.

#include "fit.hpp"
#include "linops.hpp"
#include "noise.hpp"
#include "solvers.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace noisy_cg::experiments {

using linops::LinearOperator;
using linops::QuadraticProblem;
using noise::NoiseModel;
using solvers::SolverTrace;

enum class Family { trajectory, sweep_delta, sweep_r, compare };
enum class Representation { diagonal, dense };
enum class GridParam { delta_a, delta_b };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::trajectory: return "trajectory";
    case Family::sweep_delta: return "sweep_delta";
    case Family::sweep_r: return "sweep_r";
    case Family::compare: return "compare";
  }
  return "?";
}
inline const char* to_string(Representation r) {
  return r == Representation::diagonal ? "diagonal" : "dense";
}
inline const char* to_string(GridParam g) { return g == GridParam::delta_a ? "delta_a" : "delta_b"; }

struct ProblemSpec {
  std::size_t n = 1000;
  double lambda_max = 100.0;
  linops::Decay decay = linops::Decay::geometric;
  // Geometric decay only: when > 0 the ratio is chosen so lambda_1 / lambda_n =
  // condition; 0 uses `rate`; auto_condition means 10 n^2.
  static constexpr double auto_condition = -1;
  double condition = auto_condition;
  double rate = 0.5;
  double floor = 0;
  Representation representation = Representation::diagonal;
  std::uint64_t operator_seed = 0;  // rotation for the dense representation
  double r = 2000;
  std::vector<double> r_grid;

  bool operator==(const ProblemSpec&) const = default;

  double target_condition() const {
    return condition == auto_condition ? 10.0 * double(n) * double(n) : condition;
  }

  linops::SpectrumSpec spectrum() const {
    linops::SpectrumSpec s;
    if (decay == linops::Decay::geometric && target_condition() == 1) {
      s.n = n;
      s.lambda_max = lambda_max;
      s.floor = lambda_max;
      return s;
    }
    if (decay == linops::Decay::geometric && target_condition() > 0)
      s = linops::SpectrumSpec::geometric_with_condition(n, target_condition(), lambda_max);
    else {
      s.n = n;
      s.lambda_max = lambda_max;
      s.decay = decay;
      s.rate = rate;
    }
    s.floor = floor;
    return s;
  }
};

struct NoiseSpec {
  noise::Kind kind = noise::Kind::exact;
  noise::VectorKind combined_vector = noise::VectorKind::stochastic;
  double delta_a = 0;
  double delta_b = 0;
  std::vector<double> delta_grid;
  // Which delta `delta_grid` varies; defaults to delta_a for matrix noise.
  std::optional<GridParam> grid_param;
  noise::Resample resample = noise::Resample::fixed_per_run;
  bool fixed_magnitudes = false;

  bool operator==(const NoiseSpec&) const = default;

  GridParam effective_grid_param() const {
    if (grid_param) return *grid_param;
    return kind == noise::Kind::matrix ? GridParam::delta_a : GridParam::delta_b;
  }

  NoiseModel model(std::uint64_t seed, double delta_a_v, double delta_b_v) const {
    NoiseModel m;
    m.seed = seed;
    m.resample = resample;
    m.fixed_magnitudes = fixed_magnitudes;
    switch (kind) {
      case noise::Kind::exact: break;
      case noise::Kind::adversarial_b:
        m.vector_kind = noise::VectorKind::adversarial;
        m.delta_b = delta_b_v;
        break;
      case noise::Kind::stochastic_b:
        m.vector_kind = noise::VectorKind::stochastic;
        m.delta_b = delta_b_v;
        break;
      case noise::Kind::matrix:
        m.matrix_noise = true;
        m.delta_a = delta_a_v;
        break;
      case noise::Kind::combined:
        m.matrix_noise = true;
        m.delta_a = delta_a_v;
        m.vector_kind = combined_vector;
        m.delta_b = delta_b_v;
        break;
    }
    return m;
  }
};

enum class StopKind { grad_norm, nemirovsky };

struct SolverSpec {
  solvers::BetaFormula beta = solvers::BetaFormula::conjugacy;
  double curvature_tol = 1e-14;
  std::vector<StopKind> stop;  // empty: run the full budget
  double eps = 1e-10;

  bool operator==(const SolverSpec&) const = default;

  solvers::StopRule rule(double delta_a, double delta_b) const {
    std::vector<solvers::StopRule> members;
    for (auto k : stop)
      members.push_back(k == StopKind::grad_norm ? solvers::StopRule::grad_norm(eps)
                                                 : solvers::StopRule::nemirovsky(delta_a, delta_b));
    return solvers::StopRule::composite(std::move(members));
  }

  solvers::CgOptions options() const {
    solvers::CgOptions o;
    o.beta = beta;
    o.curvature_tol = curvature_tol;
    return o;
  }
};

struct ExperimentConfig {
  Family family = Family::trajectory;
  ProblemSpec problem;
  NoiseSpec noise;
  SolverSpec solver;
  double budget = 5;  // iterations = budget * n
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double tail_fraction = 0.2;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;

  std::size_t iterations() const {
    return std::max<std::size_t>(1, std::size_t(std::llround(budget * double(problem.n))));
  }

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Asymptote and accumulation diagnostics

/// Arithmetic mean of the final `tail_fraction` of `values` (at least one value).
inline double estimate_asymptote(std::span<const double> values, double tail_fraction = 0.2) {
  if (values.empty()) throw std::invalid_argument("estimate_asymptote: empty sequence");
  if (!(tail_fraction > 0 && tail_fraction <= 1))
    throw std::invalid_argument("estimate_asymptote: tail_fraction must be in (0,1]");
  const auto count = std::clamp<std::size_t>(
      std::size_t(std::llround(tail_fraction * double(values.size()))), 1, values.size());
  double sum = 0;
  for (std::size_t i = values.size() - count; i < values.size(); ++i) sum += values[i];
  return sum / double(count);
}

inline constexpr std::size_t min_trace_records = 10;

inline std::vector<double> f_values(const SolverTrace& t) {
  std::vector<double> f(t.records.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = t.records[i].f_true;
  return f;
}

/// f(x_k) - f(x*) along the trace.
inline std::vector<double> gaps(const SolverTrace& t) {
  std::vector<double> g(t.records.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = t.records[i].f_true - t.f_star;
  return g;
}

/// Cesaro tail mean of f_true over the final `tail_fraction` of the records.
inline double estimate_asymptote(const SolverTrace& trace, double tail_fraction = 0.2) {
  if (trace.records.size() < min_trace_records)
    throw std::invalid_argument("estimate_asymptote: trace has fewer than 10 records");
  if (!(tail_fraction > 0 && tail_fraction < 1))
    throw std::invalid_argument("estimate_asymptote: tail_fraction must be in (0,1)");
  const auto f = f_values(trace);
  return estimate_asymptote(std::span<const double>(f), tail_fraction);
}

/// |Cesaro asymptote - f*|, accumulated as a mean of gaps.
inline double plateau_error(const SolverTrace& trace, double tail_fraction = 0.2) {
  if (trace.records.size() < min_trace_records)
    throw std::invalid_argument("plateau_error: trace has fewer than 10 records");
  const auto g = gaps(trace);
  return std::abs(estimate_asymptote(std::span<const double>(g), tail_fraction));
}

/// S_k = mean of v_j over j in [floor(k/2), k].
inline std::vector<double> cesaro_smooth(std::span<const double> v) {
  std::vector<double> prefix(v.size() + 1, 0.0), s(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) prefix[i + 1] = prefix[i] + v[i];
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::size_t lo = k / 2;
    s[k] = (prefix[k + 1] - prefix[lo]) / double(k + 1 - lo);
  }
  return s;
}

/// max of the smoothed gap over the last quarter of the run divided by its
/// min over the second quarter. Values <= 2 mean no accumulation.
inline double no_accumulation_ratio(const SolverTrace& trace) {
  if (trace.records.size() < min_trace_records)
    throw std::invalid_argument("no_accumulation_ratio: trace has fewer than 10 records");
  const auto g = gaps(trace);
  const auto s = cesaro_smooth(g);
  const std::size_t n = s.size() - 1;
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (std::size_t k = n / 4; k <= n / 2; ++k) lo = std::min(lo, s[k]);
  for (std::size_t k = (3 * n) / 4; k <= n; ++k) hi = std::max(hi, s[k]);
  if (lo <= 0) return hi <= 0 ? 1.0 : std::numeric_limits<double>::infinity();
  return hi / lo;
}

// ---------------------------------------------------------------------------
// Worker pool

/// NOISY_CG_WORKERS if set and positive, else the hardware concurrency.
inline std::size_t worker_count() {
  std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("NOISY_CG_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return std::size_t(v);
  }
  return hw;
}

/// Runs task(i) for i in [0, count) on at most `workers` threads. The first
/// exception in index order is rethrown after all workers finish.
inline void parallel_for(std::size_t count, std::size_t workers,
                         const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
          try {
            task(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Problem construction

inline std::shared_ptr<const LinearOperator<double>> build_operator(const ProblemSpec& spec) {
  const auto eig = linops::make_spectrum(spec.spectrum());
  if (spec.representation == Representation::diagonal)
    return std::make_shared<const LinearOperator<double>>(LinearOperator<double>::diagonal(eig));
  return std::make_shared<const LinearOperator<double>>(
      linops::make_dense_spd<double>(eig, spec.operator_seed));
}

struct RunSpec {
  double r = 0;
  double delta_a = 0;
  double delta_b = 0;
  std::uint64_t seed = 0;
};

inline std::string describe(const RunSpec& s) {
  std::ostringstream os;
  os << "seed=" << s.seed << " r=" << s.r << " delta_a=" << s.delta_a << " delta_b=" << s.delta_b;
  return os.str();
}

struct RunResult {
  RunSpec spec;
  SolverTrace trace;
};

inline RunResult run_cg(const ExperimentConfig& cfg,
                        const std::shared_ptr<const LinearOperator<double>>& a, const RunSpec& s,
                        bool with_stop_rule) {
  try {
    const auto problem = linops::make_problem(a, s.r, s.seed);
    const auto model = cfg.noise.model(s.seed, s.delta_a, s.delta_b);
    const auto rule = with_stop_rule ? cfg.solver.rule(s.delta_a, s.delta_b)
                                     : solvers::StopRule::none();
    return {s, solvers::cg_solve(problem, model, rule, cfg.iterations(), cfg.solver.options())};
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("run failed (") + describe(s) + "): " + e.what());
  }
}

inline RunResult run_nesterov(const ExperimentConfig& cfg,
                              const std::shared_ptr<const LinearOperator<double>>& a,
                              const RunSpec& s) {
  try {
    const auto problem = linops::make_problem(a, s.r, s.seed);
    const auto model = cfg.noise.model(s.seed, s.delta_a, s.delta_b);
    return {s, solvers::nesterov_solve(problem, model, cfg.iterations())};
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("nesterov run failed (") + describe(s) + "): " + e.what());
  }
}

/// Delta values for a family that does not sweep delta: the grid if present,
/// else the single configured value.
inline std::vector<double> delta_series(const ExperimentConfig& cfg) {
  if (!cfg.noise.delta_grid.empty()) return cfg.noise.delta_grid;
  return {cfg.noise.effective_grid_param() == GridParam::delta_a ? cfg.noise.delta_a
                                                                 : cfg.noise.delta_b};
}

inline RunSpec with_delta(const ExperimentConfig& cfg, RunSpec s, double delta) {
  s.delta_a = cfg.noise.delta_a;
  s.delta_b = cfg.noise.delta_b;
  if (cfg.noise.effective_grid_param() == GridParam::delta_a)
    s.delta_a = delta;
  else
    s.delta_b = delta;
  return s;
}

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectoryRun {
  std::size_t run_id = 0;
  RunSpec spec;
  SolverTrace trace;
  double plateau = 0;        // Cesaro asymptote of f_true
  double plateau_error = 0;  // |plateau - f*|
  double ratio = 0;          // no-accumulation ratio
  double last_error_f = 0;   // f(x_N) - f*
};

struct TrajectoryResult {
  ExperimentConfig config;
  std::vector<TrajectoryRun> runs;
};

inline TrajectoryResult run_trajectory(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto a = build_operator(cfg.problem);
  std::vector<RunSpec> specs;
  for (double d : delta_series(cfg))
    for (auto seed : cfg.seeds) specs.push_back(with_delta(cfg, {cfg.problem.r, 0, 0, seed}, d));

  TrajectoryResult out;
  out.config = cfg;
  out.runs.resize(specs.size());
  parallel_for(specs.size(), worker_count(), [&](std::size_t i) {
    auto rr = run_cg(cfg, a, specs[i], true);
    TrajectoryRun& run = out.runs[i];
    run.run_id = i;
    run.spec = specs[i];
    run.trace = std::move(rr.trace);
    if (run.trace.records.size() >= min_trace_records) {
      run.plateau = estimate_asymptote(run.trace, cfg.tail_fraction);
      run.plateau_error = plateau_error(run.trace, cfg.tail_fraction);
      run.ratio = no_accumulation_ratio(run.trace);
    } else {
      run.plateau = run.trace.last().f_true;
      run.plateau_error = std::abs(run.plateau - run.trace.f_star);
      run.ratio = std::numeric_limits<double>::quiet_NaN();
    }
    run.last_error_f = run.trace.last().f_true - run.trace.f_star;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepPoint {
  double grid_value = 0;
  RunSpec spec;
  double plateau_error_f = 0;
  double final_error_x = 0;
  double last_error_f = 0;
  std::string status;
};

struct NamedFit {
  std::string name;
  fit::FitReport report;
};

/// One curve of a sweep: the grid parameter varies, everything else is fixed.
struct SweepSeries {
  std::string label;  // e.g. "r=10"
  std::vector<double> grid;
  std::vector<double> error_mean, error_std;          // plateau error in f
  std::vector<double> arg_error_mean, arg_error_std;  // final error in x
  std::vector<SweepPoint> points;                     // grid-major, then seed
  std::vector<NamedFit> fits;

  const fit::FitReport* find_fit(const std::string& name) const {
    for (const auto& f : fits)
      if (f.name == name) return &f.report;
    return nullptr;
  }
};

struct SweepResult {
  ExperimentConfig config;
  std::string family;
  std::string grid_param_name;
  std::vector<SweepSeries> series;
};

namespace detail {

inline std::string format_label(const char* name, double v) {
  std::ostringstream os;
  os << name << '=' << v;
  return os.str();
}

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
}

inline void summarize(SweepSeries& s, std::size_t seeds) {
  const std::size_t g = s.grid.size();
  s.error_mean.assign(g, 0);
  s.error_std.assign(g, 0);
  s.arg_error_mean.assign(g, 0);
  s.arg_error_std.assign(g, 0);
  for (std::size_t i = 0; i < g; ++i) {
    std::vector<double> ef, ex;
    for (std::size_t j = 0; j < seeds; ++j) {
      const auto& p = s.points[i * seeds + j];
      ef.push_back(p.plateau_error_f);
      ex.push_back(p.final_error_x);
    }
    mean_std(ef, s.error_mean[i], s.error_std[i]);
    mean_std(ex, s.arg_error_mean[i], s.arg_error_std[i]);
  }
}

inline SweepResult run_sweep(const ExperimentConfig& cfg, bool over_r) {
  cfg.validate();
  const auto a = build_operator(cfg.problem);
  const std::size_t seeds = cfg.seeds.size();

  SweepResult out;
  out.config = cfg;
  const GridParam gp = cfg.noise.effective_grid_param();
  out.family = over_r ? "sweep_r" : "sweep_delta";
  out.grid_param_name = over_r ? "r" : to_string(gp);

  std::vector<double> series_values, grid;
  if (over_r) {
    series_values = delta_series(cfg);
    grid = cfg.problem.r_grid;
  } else {
    series_values = cfg.problem.r_grid.empty() ? std::vector<double>{cfg.problem.r}
                                               : cfg.problem.r_grid;
    grid = cfg.noise.delta_grid;
  }

  std::vector<RunSpec> specs;
  for (double sv : series_values)
    for (double gv : grid)
      for (auto seed : cfg.seeds) {
        RunSpec s;
        s.seed = seed;
        if (over_r) {
          s = with_delta(cfg, s, sv);
          s.r = gv;
        } else {
          s.r = sv;
          s = with_delta(cfg, s, gv);
        }
        specs.push_back(s);
      }

  std::vector<SweepPoint> points(specs.size());
  parallel_for(specs.size(), worker_count(), [&](std::size_t i) {
    auto rr = run_cg(cfg, a, specs[i], false);
    SweepPoint& p = points[i];
    p.spec = specs[i];
    p.grid_value = over_r ? specs[i].r
                          : (gp == GridParam::delta_a ? specs[i].delta_a : specs[i].delta_b);
    p.plateau_error_f = rr.trace.records.size() >= min_trace_records
                            ? plateau_error(rr.trace, cfg.tail_fraction)
                            : std::abs(rr.trace.last().f_true - rr.trace.f_star);
    p.final_error_x = rr.trace.last().arg_error;
    p.last_error_f = rr.trace.last().f_true - rr.trace.f_star;
    p.status = solvers::to_string(rr.trace.status);
  });

  const std::size_t per_series = grid.size() * seeds;
  for (std::size_t si = 0; si < series_values.size(); ++si) {
    SweepSeries s;
    s.label = format_label(over_r ? to_string(gp) : "r", series_values[si]);
    s.grid = grid;
    s.points.assign(points.begin() + std::ptrdiff_t(si * per_series),
                    points.begin() + std::ptrdiff_t((si + 1) * per_series));
    summarize(s, seeds);
    if (over_r) {
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < grid.size(); ++i)
        if (grid[i] > 0) {
          xs.push_back(grid[i]);
          ys.push_back(s.error_mean[i]);
        }
      s.fits.push_back({"power_law", fit::fit_least_squares(xs, ys, fit::Model::power_law)});
      s.fits.push_back({"quadratic", fit::fit_least_squares(grid, s.error_mean, fit::Model::quadratic)});
      s.fits.push_back({"affine", fit::fit_least_squares(grid, s.error_mean, fit::Model::affine)});
    } else {
      s.fits.push_back({"affine", fit::fit_least_squares(grid, s.error_mean, fit::Model::affine)});
      s.fits.push_back(
          {"affine_arg_error", fit::fit_least_squares(grid, s.arg_error_mean, fit::Model::affine)});
    }
    out.series.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

inline SweepResult sweep_delta(const ExperimentConfig& cfg) { return detail::run_sweep(cfg, false); }
inline SweepResult sweep_R(const ExperimentConfig& cfg) { return detail::run_sweep(cfg, true); }

// ---------------------------------------------------------------------------
// CG vs accelerated gradient

struct CompareRun {
  RunSpec spec;
  SolverTrace cg, nesterov;
  double cg_plateau_gap = 0;  // Cesaro tail mean of f - f* for CG
  std::size_t cg_iterations = 0;
  std::size_t nesterov_iterations = 0;
  bool nesterov_reached = false;

  double ratio() const {
    return double(nesterov_iterations) / double(std::max<std::size_t>(1, cg_iterations));
  }
};

struct CompareResult {
  ExperimentConfig config;
  std::vector<CompareRun> runs;
};

/// First k with gap_k <= (1 + band) * plateau, or nullopt.
inline std::optional<std::size_t> first_within(const std::vector<double>& gap, double plateau,
                                               double band = 0.1) {
  for (std::size_t k = 0; k < gap.size(); ++k)
    if (gap[k] <= (1 + band) * plateau) return k;
  return std::nullopt;
}

inline CompareResult compare_nesterov(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto a = build_operator(cfg.problem);
  std::vector<RunSpec> specs;
  for (double d : delta_series(cfg))
    for (auto seed : cfg.seeds) specs.push_back(with_delta(cfg, {cfg.problem.r, 0, 0, seed}, d));

  CompareResult out;
  out.config = cfg;
  out.runs.resize(specs.size());
  // Solver runs are the unit of work: even index CG, odd index Nesterov.
  parallel_for(2 * specs.size(), worker_count(), [&](std::size_t i) {
    auto& run = out.runs[i / 2];
    if (i % 2 == 0)
      run.cg = run_cg(cfg, a, specs[i / 2], false).trace;
    else
      run.nesterov = run_nesterov(cfg, a, specs[i / 2]).trace;
  });
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto& run = out.runs[i];
    run.spec = specs[i];
    const auto gc = gaps(run.cg), gn = gaps(run.nesterov);
    run.cg_plateau_gap = std::max(0.0, estimate_asymptote(std::span<const double>(gc), cfg.tail_fraction));
    run.cg_iterations = first_within(gc, run.cg_plateau_gap).value_or(gc.size());
    const auto kn = first_within(gn, run.cg_plateau_gap);
    run.nesterov_reached = kn.has_value();
    run.nesterov_iterations = kn.value_or(gn.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV output

/// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite values.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline void write_trajectory_csv(std::ostream& os, const TrajectoryResult& r) {
  os << "run_id,seed,noise_kind,n,delta_a,delta_b,r,iter,f_true,f_scaled,residual_norm,arg_error\n";
  const std::string kind = noise::to_string(r.config.noise.kind);
  for (const auto& run : r.runs)
    for (const auto& rec : run.trace.records)
      os << run.run_id << ',' << run.spec.seed << ',' << kind << ',' << r.config.problem.n << ','
         << fmt(run.spec.delta_a) << ',' << fmt(run.spec.delta_b) << ',' << fmt(run.spec.r) << ','
         << rec.k << ',' << fmt(rec.f_true) << ',' << fmt(rec.f_scaled) << ','
         << fmt(rec.residual_norm) << ',' << fmt(rec.arg_error) << '\n';
}

inline std::string series_family(const SweepResult& r, const SweepSeries& s) {
  return r.family + "[" + s.label + "]";
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << "family,noise_kind,n,grid_param_name,grid_value,seed,plateau_error_f,final_error_x,status\n";
  const std::string kind = noise::to_string(r.config.noise.kind);
  for (const auto& s : r.series)
    for (const auto& p : s.points)
      os << series_family(r, s) << ',' << kind << ',' << r.config.problem.n << ','
         << r.grid_param_name << ',' << fmt(p.grid_value) << ',' << p.spec.seed << ','
         << fmt(p.plateau_error_f) << ',' << fmt(p.final_error_x) << ',' << p.status << '\n';
}

inline void write_fits_csv(std::ostream& os, const SweepResult& r) {
  os << "family,model,coef0,coef1,coef2,r_squared,loglog_slope\n";
  for (const auto& s : r.series)
    for (const auto& f : s.fits) {
      const auto& c = f.report.coefficients;
      const bool ok = f.report.ok();
      const double nan = std::numeric_limits<double>::quiet_NaN();
      os << series_family(r, s) << ',' << f.name << ',' << fmt(ok ? c[0] : nan) << ','
         << fmt(ok ? c[1] : nan) << ',' << fmt(ok ? c[2] : nan) << ','
         << fmt(f.report.r_squared) << ',' << fmt(f.report.loglog_slope) << '\n';
    }
}

inline void write_compare_csv(std::ostream& os, const CompareResult& r) {
  os << "solver,seed,iter,f_scaled\n";
  for (const auto& run : r.runs) {
    for (const auto& rec : run.cg.records)
      os << "cg," << run.spec.seed << ',' << rec.k << ',' << fmt(rec.f_scaled) << '\n';
    for (const auto& rec : run.nesterov.records)
      os << "nesterov," << run.spec.seed << ',' << rec.k << ',' << fmt(rec.f_scaled) << '\n';
  }
}

/// Writes via a temporary file so a failed run never leaves a truncated CSV.
inline void write_file(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& body) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    body(f);
    f.flush();
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------

inline void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& msg) {
    throw std::invalid_argument(key + ": " + msg);
  };
  if (problem.n < 1) fail("problem.n", "must be >= 1");
  if (!(problem.lambda_max > 0) || !std::isfinite(problem.lambda_max))
    fail("problem.lambda_max", "must be > 0");
  if (problem.decay == linops::Decay::geometric) {
    if (problem.condition != 0 && problem.condition != ProblemSpec::auto_condition &&
        !(problem.condition >= 1))
      fail("problem.condition", "must be >= 1, auto, or 0 to use problem.rate");
    if (problem.condition == 0 && !(problem.rate > 0 && problem.rate < 1))
      fail("problem.rate", "geometric ratio must be in (0,1)");
  } else if (!(problem.rate > 0)) {
    fail("problem.rate", "power exponent must be > 0");
  }
  if (!(problem.floor >= 0) || problem.floor > problem.lambda_max)
    fail("problem.floor", "must be in [0, lambda_max]");
  if (!(problem.r >= 0) || !std::isfinite(problem.r)) fail("problem.r", "must be >= 0");
  for (double v : problem.r_grid)
    if (!(v >= 0) || !std::isfinite(v)) fail("problem.r_grid", "entries must be >= 0");
  if (problem.representation == Representation::dense && problem.n > default_dense_cap)
    fail("problem.n", "dense representation is capped at n <= " + std::to_string(default_dense_cap));
  const bool matrix = noise.kind == noise::Kind::matrix || noise.kind == noise::Kind::combined;
  if (matrix && problem.n > default_dense_cap)
    fail("problem.n", "matrix noise is capped at n <= " + std::to_string(default_dense_cap));
  if (!(noise.delta_a >= 0) || !std::isfinite(noise.delta_a)) fail("noise.delta_a", "must be >= 0");
  if (!(noise.delta_b >= 0) || !std::isfinite(noise.delta_b)) fail("noise.delta_b", "must be >= 0");
  for (double v : noise.delta_grid)
    if (!(v >= 0) || !std::isfinite(v)) fail("noise.delta_grid", "entries must be >= 0");
  if (noise.kind == noise::Kind::combined && noise.combined_vector == noise::VectorKind::none)
    fail("noise.vector", "combined noise needs adversarial or stochastic");
  if (!(budget > 0) || !std::isfinite(budget)) fail("run.budget", "must be > 0");
  if (seeds.empty()) fail("run.seeds", "must be nonempty");
  if (!(tail_fraction > 0 && tail_fraction < 1)) fail("run.tail_fraction", "must be in (0,1)");
  if (!(solver.curvature_tol >= 0)) fail("solver.curvature_tol", "must be >= 0");
  if (!solver.stop.empty() && !(solver.eps > 0)) fail("solver.eps", "must be > 0");
  if (output_dir.empty()) fail("run.output_dir", "must be nonempty");

  switch (family) {
    case Family::sweep_delta:
      if (noise.delta_grid.size() < 5) fail("noise.delta_grid", "needs >= 5 points");
      if (std::find(noise.delta_grid.begin(), noise.delta_grid.end(), 0.0) == noise.delta_grid.end())
        fail("noise.delta_grid", "must include 0");
      break;
    case Family::sweep_r:
      if (std::count_if(problem.r_grid.begin(), problem.r_grid.end(),
                        [](double v) { return v > 0; }) < 5)
        fail("problem.r_grid", "needs >= 5 strictly positive points");
      break;
    case Family::trajectory:
    case Family::compare:
      break;
  }
}

}  // namespace noisy_cg::experiments
