#pragma once

// Command-line front end: noisy_cg <subcommand> --config FILE [--set key=value]...
//
// Exit codes: 0 success, 1 configuration error, 2 usage error, 3 solver
// failure (breakdown or non-finite values), 4 I/O failure.

#include "config.hpp"
#include "experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace noisy_cg::cli {

namespace fs = std::filesystem;
using experiments::ExperimentConfig;
using experiments::Family;

enum Exit { ok = 0, config_failure = 1, usage = 2, solver_failure = 3, io_failure = 4 };

namespace detail {

inline std::string num(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

inline void write_manifest(const fs::path& dir, const std::string& command,
                           const std::vector<std::string>& files, const ExperimentConfig& cfg) {
  experiments::write_file(dir / "manifest.txt", [&](std::ostream& os) {
    os << "# command: " << command << '\n';
    for (const auto& f : files) os << "# file: " << f << '\n';
    os << "# resolved configuration\n" << config::to_text(cfg);
  });
}

inline int report_trajectory(const experiments::TrajectoryResult& r, std::ostream& out) {
  out << std::left << std::setw(5) << "run" << std::setw(7) << "seed" << std::setw(10) << "delta_a"
      << std::setw(10) << "delta_b" << std::setw(10) << "R" << std::setw(8) << "iters"
      << std::setw(19) << "status" << std::setw(14) << "plateau_err" << "no_accum_ratio\n";
  bool broke = false, accumulated = false;
  for (const auto& run : r.runs) {
    broke |= run.trace.status == solvers::Status::breakdown_detected;
    accumulated |= !(run.ratio <= 2.0);
    out << std::setw(5) << run.run_id << std::setw(7) << run.spec.seed << std::setw(10)
        << num(run.spec.delta_a) << std::setw(10) << num(run.spec.delta_b) << std::setw(10)
        << num(run.spec.r) << std::setw(8) << run.trace.iterations() << std::setw(19)
        << solvers::to_string(run.trace.status) << std::setw(14) << num(run.plateau_error)
        << num(run.ratio, 4) << '\n';
  }
  out << "no accumulation (ratio <= 2 for every run): " << (accumulated ? "no" : "yes") << '\n';
  return broke ? solver_failure : ok;
}

inline int report_sweep(const experiments::SweepResult& r, std::ostream& out) {
  bool broke = false;
  for (const auto& s : r.series) {
    out << experiments::series_family(r, s) << '\n';
    out << "  " << std::left << std::setw(12) << r.grid_param_name << std::setw(14) << "err_f_mean"
        << std::setw(14) << "err_f_std" << "err_x_mean\n";
    for (std::size_t i = 0; i < s.grid.size(); ++i)
      out << "  " << std::setw(12) << num(s.grid[i]) << std::setw(14) << num(s.error_mean[i])
          << std::setw(14) << num(s.error_std[i]) << num(s.arg_error_mean[i]) << '\n';
    for (const auto& f : s.fits) {
      out << "  fit " << std::setw(18) << f.name;
      if (!f.report.ok()) {
        out << fit::to_string(f.report.status) << '\n';
        continue;
      }
      const auto& c = f.report.coefficients;
      out << "c0=" << num(c[0]) << " c1=" << num(c[1]) << " c2=" << num(c[2])
          << " r2=" << num(f.report.r_squared, 4);
      if (f.report.model == fit::Model::power_law) out << " slope=" << num(f.report.loglog_slope, 4);
      out << '\n';
    }
    for (const auto& p : s.points) broke |= p.status == "BreakdownDetected";
  }
  return broke ? solver_failure : ok;
}

inline int report_compare(const experiments::CompareResult& r, std::ostream& out) {
  out << std::left << std::setw(7) << "seed" << std::setw(14) << "cg_plateau" << std::setw(10)
      << "cg_iters" << std::setw(14) << "nesterov_iters" << "ratio\n";
  bool broke = false;
  for (const auto& run : r.runs) {
    broke |= run.cg.status == solvers::Status::breakdown_detected;
    out << std::setw(7) << run.spec.seed << std::setw(14) << num(run.cg_plateau_gap)
        << std::setw(10) << run.cg_iterations << std::setw(14)
        << (std::to_string(run.nesterov_iterations) + (run.nesterov_reached ? "" : "+"))
        << num(run.ratio(), 4) << '\n';
  }
  out << "(+ : band not reached within the budget)\n";
  return broke ? solver_failure : ok;
}

inline int run_family(ExperimentConfig cfg, const std::string& command, std::ostream& out) {
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  std::vector<std::string> files;
  int code = ok;
  switch (cfg.family) {
    case Family::trajectory: {
      const auto r = experiments::run_trajectory(cfg);
      experiments::write_file(dir / "trajectory.csv",
                              [&](std::ostream& os) { experiments::write_trajectory_csv(os, r); });
      files = {"trajectory.csv"};
      code = report_trajectory(r, out);
      break;
    }
    case Family::sweep_delta:
    case Family::sweep_r: {
      const auto r = cfg.family == Family::sweep_delta ? experiments::sweep_delta(cfg)
                                                       : experiments::sweep_R(cfg);
      experiments::write_file(dir / "sweep.csv",
                              [&](std::ostream& os) { experiments::write_sweep_csv(os, r); });
      experiments::write_file(dir / "fits.csv",
                              [&](std::ostream& os) { experiments::write_fits_csv(os, r); });
      files = {"sweep.csv", "fits.csv"};
      code = report_sweep(r, out);
      break;
    }
    case Family::compare: {
      const auto r = experiments::compare_nesterov(cfg);
      experiments::write_file(dir / "compare.csv",
                              [&](std::ostream& os) { experiments::write_compare_csv(os, r); });
      files = {"compare.csv"};
      code = report_compare(r, out);
      break;
    }
  }
  write_manifest(dir, command, files, cfg);
  for (const auto& f : files) out << "wrote " << (dir / f).string() << '\n';
  return code;
}

}  // namespace detail

inline int parse_and_run(int argc, const char* const* argv, std::ostream& out = std::cout,
                         std::ostream& err = std::cerr) {
  CLI::App app{"Conjugate gradients with inexact oracles: experiment runner"};
  app.name("noisy_cg");
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string output_dir;
  int verbosity = 0;

  struct Sub {
    const char* name;
    Family family;
    const char* help;
  };
  const Sub subs[] = {
      {"trajectory", Family::trajectory, "Run CG for budget*n iterations and report plateaus"},
      {"sweep-delta", Family::sweep_delta, "Plateau error against the noise level"},
      {"sweep-r", Family::sweep_r, "Plateau error against the solution size R"},
      {"compare", Family::compare, "CG against accelerated gradient on identical oracles"},
  };
  std::vector<std::pair<CLI::App*, Family>> run_cmds;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("-c,--config", config_path, "Configuration file (key = value or JSON)")
        ->required();
    sc->add_option("--set", sets, "Override, key=value (repeatable)");
    sc->add_option("-o,--output-dir", output_dir, "Output directory (overrides run.output_dir)");
    sc->add_flag("-v,--verbose", verbosity, "More output");
    run_cmds.emplace_back(sc, s.family);
  }
  auto* validate = app.add_subcommand("validate-config", "Parse, validate and echo a configuration");
  validate->add_option("file", config_path, "Configuration file");
  validate->add_option("-c,--config", config_path, "Configuration file");
  validate->add_option("--set", sets, "Override, key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return usage;
  }

  try {
    if (validate->parsed()) {
      if (config_path.empty()) {
        err << "error: validate-config needs a configuration file\n\n" << validate->help();
        return usage;
      }
      const auto cfg = config::load_config(config_path, sets);
      out << config::to_text(cfg);
      return ok;
    }
    for (const auto& [sc, family] : run_cmds) {
      if (!sc->parsed()) continue;
      auto cfg = config::load_config(config_path, sets);
      cfg.family = family;
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      try {
        cfg.validate();
      } catch (const std::invalid_argument& e) {
        throw config::config_error("", e.what());
      }
      if (verbosity > 0) err << config::to_text(cfg);
      return detail::run_family(cfg, sc->get_name(), out);
    }
  } catch (const config::config_not_found& e) {
    err << "error: " << e.what() << '\n';
    return config_failure;
  } catch (const config::config_error& e) {
    err << "error: invalid config: " << e.what() << '\n';
    return config_failure;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return io_failure;
  } catch (const std::exception& e) {
    const std::string what = e.what();
    err << "error: " << what << '\n';
    return what.rfind("cannot open", 0) == 0 || what.rfind("write failed", 0) == 0 ? io_failure
                                                                                   : solver_failure;
  }
  err << app.help();
  return usage;
}

}  // namespace noisy_cg::cli
