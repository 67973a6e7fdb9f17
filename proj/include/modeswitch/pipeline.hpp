// End-to-end run: validate -> solve -> residual checks -> lattice probes ->
// strategy simulation -> artifacts (values.csv, regions.csv, report.txt, status).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "modeswitch/config.hpp"
#include "modeswitch/fd_solver.hpp"
#include "modeswitch/lattice.hpp"
#include "modeswitch/strategy.hpp"

namespace modeswitch {

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitValidation = 2, kExitNonconverged = 3, kExitCheckFail = 4 };

inline const char* status_name(int code) {
  switch (code) {
    case kExitOk: return "OK";
    case kExitValidation: return "VALIDATION";
    case kExitNonconverged: return "NONCONVERGED";
    case kExitCheckFail: return "CHECKFAIL";
    default: return "ERROR";
  }
}

/// Fixed-format number: "%.<digits>g".
inline std::string fmt(double v, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string values_csv(const ValueField& field, const SwitchingRegions& regions) {
  std::string out = "x";
  const int m = field.modes();
  for (int i = 1; i <= m; ++i) out += ",v" + std::to_string(i);
  for (int i = 1; i <= m; ++i) out += ",best_target_" + std::to_string(i);
  out += '\n';
  for (std::size_t k = 0; k < field.nodes(); ++k) {
    out += fmt(field.grid()[k]);
    for (int i = 0; i < m; ++i) out += "," + fmt(field(i, k));
    for (int i = 0; i < m; ++i) out += "," + std::to_string(regions.target(i, k) + 1);
    out += '\n';
  }
  return out;
}

inline std::string regions_csv(const SwitchingRegions& regions) {
  std::string out = "from,to,x_lo,x_hi,nodes\n";
  for (const auto& iv : switch_intervals(regions)) {
    out += std::to_string(iv.from + 1) + "," + std::to_string(iv.to + 1) + "," + fmt(iv.x_lo) + "," + fmt(iv.x_hi) + "," +
           std::to_string(iv.nodes) + "\n";
  }
  return out;
}

inline std::string plot_script(int modes) {
  std::string s =
      "# gnuplot script: value curves from values.csv\n"
      "set datafile separator ','\n"
      "set terminal pngcairo size 900,600\n"
      "set output 'values.png'\n"
      "set xlabel 'x'\n"
      "set ylabel 'value'\n"
      "set key left top\n";
  s += "plot for [i=2:" + std::to_string(modes + 1) + "] 'values.csv' using 1:i with lines title columnhead(i)\n";
  return s;
}

/// Writes a CSV/text file exactly as given (binary mode, so output is byte-stable).
inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << contents;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

struct RunOutcome {
  int exit_code = kExitOk;
  std::vector<std::string> failures;
};

namespace detail {

struct SchemeResult {
  std::string name;
  SolveReport report;
};

inline bool residual_ok(const SolveReport& rep, const SolverSpec& s, std::ostringstream& log,
                        std::vector<std::string>& failures, const std::string& name) {
  const double scale = 1.0 + rep.field.sup_norm();
  const double comp = rep.residual.max_complementarity();
  const double viol = rep.residual.max_violation();
  const bool ok_c = comp < s.residual_tol * scale;
  const bool ok_v = viol < s.violation_tol * scale;
  log << "  complementarity residual  " << fmt(comp, 6) << "  (limit " << fmt(s.residual_tol * scale, 6) << ") "
      << (ok_c ? "ok" : "FAIL") << "\n";
  log << "  obstacle violation        " << fmt(viol, 6) << "  (limit " << fmt(s.violation_tol * scale, 6) << ") "
      << (ok_v ? "ok" : "FAIL") << "\n";
  if (!ok_c) failures.push_back(name + ": complementarity residual " + fmt(comp, 6));
  if (!ok_v) failures.push_back(name + ": obstacle violation " + fmt(viol, 6));
  return ok_c && ok_v;
}

}  // namespace detail

/// Runs the pipeline for `spec`, writing artifacts into `out_dir` (created if needed).
/// Exit codes: 0 all enabled checks pass, 2 validation failure, 3 non-convergence,
/// 4 residual/oracle/strategy check failure. report.txt and status are always written.
inline RunOutcome run(const RunSpec& spec, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const SwitchingProblem& p = spec.problem;
  const int m = p.modes();
  RunOutcome outcome;
  std::ostringstream rep;

  auto finish = [&](int code) {
    outcome.exit_code = code;
    rep << "\nstatus: " << status_name(code) << "\n";
    for (const auto& f : outcome.failures) rep << "  failed: " << f << "\n";
    write_file(out_dir / "report.txt", rep.str());
    write_file(out_dir / "status", std::string(status_name(code)) + "\n");
    return outcome;
  };

  rep << "modeswitch run report\n\n";
  rep << "problem: " << m << " mode(s), r = " << fmt(p.r()) << ", gamma = " << p.gamma() << "\n";
  rep << "model:   b(x) = " << p.model().drift.to_string() << ", sigma(x) = " << p.model().volatility.to_string()
      << "\n";
  rep << "grid:    [" << fmt(spec.grid.x_min) << ", " << fmt(spec.grid.x_max) << "], " << spec.grid.n_nodes << " nodes, "
      << (spec.grid.spacing == Spacing::Uniform ? "uniform" : "log") << "\n";

  // Validation gate.
  const auto val = validate(p, spec.grid.x_min, spec.grid.x_max);
  rep << "\n[validation]\n";
  for (const auto& msg : val.messages) rep << "  " << msg << "\n";
  if (!val.ok()) {
    if (!val.h1_ok) outcome.failures.push_back("H1 (affine Lipschitz coefficients)");
    if (!val.h2_ok) outcome.failures.push_back("H2 (switching costs)");
    if (!val.h3_ok) outcome.failures.push_back("H3 (profit growth)");
    if (!val.h4_ok) outcome.failures.push_back("H4 (discount dominates moment growth)");
    return finish(kExitValidation);
  }

  // Solves.
  const Grid grid = build_grid(spec.grid.x_min, spec.grid.x_max, spec.grid.n_nodes, spec.grid.spacing);
  std::vector<detail::SchemeResult> results;
  if (spec.solver.scheme != Scheme::Penalized) results.push_back({"picard", picard_solve(p, grid, spec.solver.solve)});
  if (spec.solver.scheme != Scheme::Picard) results.push_back({"penalized", penalized_solve(p, grid, spec.solver.solve)});

  bool converged = true;
  bool checks_ok = true;
  for (const auto& r : results) {
    rep << "\n[solver: " << r.name << "]\n";
    rep << "  converged                 " << (r.report.converged ? "yes" : "NO") << "\n";
    rep << "  " << (r.name == "picard" ? "outer iterations          " : "penalty levels            ")
        << r.report.outer_iterations << "\n";
    if (r.name == "picard") rep << "  monotone iterates         " << (r.report.monotone ? "yes" : "NO") << "\n";
    if (!r.report.sup_diffs.empty()) rep << "  last sup-norm change      " << fmt(r.report.sup_diffs.back(), 6) << "\n";
    rep << "  sup-norm of v             " << fmt(r.report.field.sup_norm(), 12) << "\n";
    if (!r.report.converged) {
      converged = false;
      outcome.failures.push_back(r.name + ": not converged");
    }
    if (!detail::residual_ok(r.report, spec.solver, rep, outcome.failures, r.name)) checks_ok = false;
  }
  if (results.size() == 2) {
    const double d = sup_distance(results[0].report.field, results[1].report.field);
    const double scale = 1.0 + std::max(results[0].report.field.sup_norm(), results[1].report.field.sup_norm());
    const bool ok = d < spec.solver.agreement_tol * scale;
    rep << "\n[scheme agreement]\n  sup |picard - penalized|  " << fmt(d, 6) << "  (limit "
        << fmt(spec.solver.agreement_tol * scale, 6) << ") " << (ok ? "ok" : "FAIL") << "\n";
    if (!ok) {
      checks_ok = false;
      outcome.failures.push_back("scheme agreement " + fmt(d, 6));
    }
  }

  const ValueField& field = results.front().report.field;
  const auto regions = extract_regions(field, p, spec.strategy.region_tol);
  write_file(out_dir / "values.csv", values_csv(field, regions));
  write_file(out_dir / "regions.csv", regions_csv(regions));
  if (spec.output.emit_plots) write_file(out_dir / "plot.gp", plot_script(m));
  rep << "\n[regions] (from " << results.front().name << " field)\n";
  const auto intervals = switch_intervals(regions);
  if (intervals.empty()) rep << "  no switching nodes\n";
  for (const auto& iv : intervals) {
    rep << "  " << iv.from + 1 << " -> " << iv.to + 1 << " on [" << fmt(iv.x_lo, 6) << ", " << fmt(iv.x_hi, 6) << "] ("
        << iv.nodes << " nodes)\n";
  }

  if (!converged) return finish(kExitNonconverged);

  const double eps = spec.oracle.eps.value_or(spec.solver.solve.outer_tol);
  if (spec.oracle.enabled) {
    rep << "\n[oracle: trinomial lattice, n_steps = " << spec.oracle.n_steps << "]\n";
    for (double x0 : spec.oracle.probes) {
      if (!grid.contains(x0)) {
        checks_ok = false;
        outcome.failures.push_back("oracle probe " + fmt(x0, 6) + " outside the grid");
        rep << "  x0 = " << fmt(x0, 6) << ": outside the grid\n";
        continue;
      }
      const double T = horizon_for_tolerance(p, x0, eps, spec.oracle.tail_constant);
      try {
        const auto lat = build_lattice(p.model(), {x0, T, spec.oracle.n_steps, spec.oracle.tail_constant});
        const auto vals = switching_dp(lat, p);
        for (int i = 0; i < m; ++i) {
          const double fd = field.at(i, x0);
          const double rel = std::abs(vals.root[i] - fd) / std::max(std::abs(fd), 1e-300);
          const bool ok = rel < spec.oracle.tol;
          rep << "  x0 = " << fmt(x0, 6) << " mode " << i + 1 << ": lattice " << fmt(vals.root[i], 10) << "  fd "
              << fmt(fd, 10) << "  rel diff " << fmt(rel, 4) << " " << (ok ? "ok" : "FAIL") << "\n";
          if (!ok) {
            checks_ok = false;
            outcome.failures.push_back("oracle x0 = " + fmt(x0, 6) + " mode " + std::to_string(i + 1));
          }
        }
        rep << "    horizon T = " << fmt(T, 6) << " (tail bound " << fmt(eps, 3) << ")\n";
      } catch (const std::domain_error& e) {
        checks_ok = false;
        outcome.failures.push_back(std::string("oracle lattice: ") + e.what());
        rep << "  x0 = " << fmt(x0, 6) << ": " << e.what() << "\n";
      }
    }
  }

  if (spec.strategy.enabled) {
    const auto& st = spec.strategy;
    rep << "\n[strategy]\n";
    const double T = st.horizon.value_or(horizon_for_tolerance(p, st.x0, spec.solver.solve.outer_tol));
    const auto paths = simulate_paths(p.model(), st.x0, st.dt, std::max(T, st.dt), st.n_paths, st.seed);
    const auto stats = run_strategy(paths, regions, p, st.start_mode, st.threads);
    const auto est = estimate_payoff(stats);
    const double value = grid.contains(st.x0) ? field.at(st.start_mode, st.x0) : std::nan("");
    const double band = 3.0 * est.std_error + st.allowance * std::abs(value);
    const bool ok = std::abs(est.mean - value) <= band;
    rep << "  x0 = " << fmt(st.x0, 6) << ", start mode " << st.start_mode + 1 << ", " << st.n_paths << " paths, dt = "
        << fmt(st.dt, 6) << ", horizon = " << fmt(paths.horizon(), 6) << ", seed = " << st.seed << "\n";
    rep << "  payoff mean               " << fmt(est.mean, 10) << "\n";
    rep << "  standard error            " << fmt(est.std_error, 6) << "\n";
    rep << "  value v_" << st.start_mode + 1 << "(x0)              " << fmt(value, 10) << "\n";
    rep << "  |mean - value|            " << fmt(std::abs(est.mean - value), 6) << "  (limit " << fmt(band, 6) << ") "
        << (ok ? "ok" : "FAIL") << "\n";
    if (!ok) {
      checks_ok = false;
      outcome.failures.push_back("strategy payoff vs value");
    }
    rep << "  switch events             " << stats.events.size() << "\n";
    rep << "  clamp fraction            " << fmt(stats.clamp_fraction(), 6) << "\n";
    if (stats.clamp_fraction() > 0.01) {
      rep << "  warning: more than 1% of region lookups fell outside the grid; consider a larger domain\n";
    }
    bool events_ok = true;
    for (std::size_t q = 0; q < stats.n_paths(); ++q) {
      const auto ev = stats.events_of(q);
      for (std::size_t k = 0; k < ev.size(); ++k) {
        if (ev[k].from == ev[k].to || (k > 0 && ev[k].time < ev[k - 1].time)) events_ok = false;
      }
    }
    if (!events_ok) {
      checks_ok = false;
      outcome.failures.push_back("strategy event ordering");
    }
    const auto decay = tau_decay(stats, st.tau_max_n);
    double max_nmean = 0.0;
    for (const auto& row : decay) max_nmean = std::max(max_nmean, row.n_mean);
    const double limit = 10.0 * decay.front().n_mean + 1.0;
    const bool decay_ok = max_nmean <= limit;
    rep << "  tau decay: n, mean exp(-r tau_n), n * mean\n";
    for (const auto& row : decay) {
      rep << "    " << row.n << "  " << fmt(row.mean, 6) << "  " << fmt(row.n_mean, 6) << "\n";
    }
    rep << "  max n * mean              " << fmt(max_nmean, 6) << "  (limit " << fmt(limit, 6) << ") "
        << (decay_ok ? "ok" : "FAIL") << "\n";
    if (!decay_ok) {
      checks_ok = false;
      outcome.failures.push_back("tau decay bound");
    }
  }

  return finish(checks_ok ? kExitOk : kExitCheckFail);
}

}  // namespace modeswitch
