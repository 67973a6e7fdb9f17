// Switching regions extracted from a solved value field, Euler-Maruyama path
// simulation, and Monte Carlo evaluation of the resulting feedback strategy.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "modeswitch/fd_solver.hpp"
#include "modeswitch/grid.hpp"
#include "modeswitch/philox.hpp"
#include "modeswitch/problem.hpp"

namespace modeswitch {

/// Per mode and grid node: the mode to switch to, or kContinue.
class SwitchingRegions {
 public:
  static constexpr int kContinue = -1;

  SwitchingRegions() = default;
  SwitchingRegions(Grid grid, int modes)
      : grid_(std::move(grid)), modes_(modes), target_(static_cast<std::size_t>(modes) * grid_.size(), kContinue) {}

  const Grid& grid() const { return grid_; }
  int modes() const { return modes_; }
  int target(int i, std::size_t k) const { return target_[static_cast<std::size_t>(i) * grid_.size() + k]; }
  void set_target(int i, std::size_t k, int j) { target_[static_cast<std::size_t>(i) * grid_.size() + k] = j; }

  bool all_continue() const {
    return std::all_of(target_.begin(), target_.end(), [](int t) { return t == kContinue; });
  }

 private:
  Grid grid_;
  int modes_ = 0;
  std::vector<int> target_;
};

/// Default region tolerance: 1e-6 (1 + sup |v|).
inline double default_region_tol(const ValueField& field) { return 1e-6 * (1.0 + field.sup_norm()); }

/// Node k of mode i switches to j when v_i <= max_l(-g_il + v_l) + tol and j is the
/// lowest index attaining that maximum. A negative tol selects the default.
inline SwitchingRegions extract_regions(const ValueField& field, const SwitchingProblem& problem,
                                        double region_tol = -1.0) {
  if (field.modes() != problem.modes()) throw std::invalid_argument("extract_regions: mode count mismatch");
  const double tol = region_tol < 0.0 ? default_region_tol(field) : region_tol;
  const int m = problem.modes();
  const Grid& g = field.grid();
  SwitchingRegions regions(g, m);
  for (int i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      int best_j = SwitchingRegions::kContinue;
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j) {
        if (j == i) continue;
        const double cand = -problem.cost(i, j).evaluate(g[k]) + field(j, k);
        if (cand > best) {
          best = cand;
          best_j = j;
        }
      }
      if (best_j != SwitchingRegions::kContinue && field(i, k) <= best + tol) regions.set_target(i, k, best_j);
    }
  }
  return regions;
}

/// A maximal run of grid nodes on which mode `from` switches to mode `to`.
struct SwitchInterval {
  int from = 0;
  int to = 0;
  double x_lo = 0.0;
  double x_hi = 0.0;
  std::size_t nodes = 0;
};

/// Maximal switch intervals, ordered by source mode and then by grid position.
inline std::vector<SwitchInterval> switch_intervals(const SwitchingRegions& regions) {
  std::vector<SwitchInterval> out;
  const Grid& g = regions.grid();
  for (int i = 0; i < regions.modes(); ++i) {
    std::size_t k = 0;
    while (k < g.size()) {
      const int j = regions.target(i, k);
      if (j == SwitchingRegions::kContinue) {
        ++k;
        continue;
      }
      std::size_t e = k;
      while (e + 1 < g.size() && regions.target(i, e + 1) == j) ++e;
      out.push_back({i, j, g[k], g[e], e - k + 1});
      k = e + 1;
    }
  }
  return out;
}

/// Euler-Maruyama paths, generated on demand: path p is a pure function of
/// (model, x0, dt, n_steps, seed, p), so paths need not be held in memory at once.
class PathSet {
 public:
  PathSet(DiffusionModel model, double x0, double dt, std::size_t n_steps, std::size_t n_paths, std::uint64_t seed)
      : model_(std::move(model)), x0_(x0), dt_(dt), n_steps_(n_steps), n_paths_(n_paths), seed_(seed) {
    // Affine coefficients in x (no |x|) are stepped directly rather than interpreted.
    const auto b = model_.drift.affine_form();
    const auto s = model_.volatility.affine_form();
    if (b && s) affine_ = std::array<AffineForm, 2>{*b, *s};
  }

  const DiffusionModel& model() const { return model_; }
  double x0() const { return x0_; }
  double dt() const { return dt_; }
  std::size_t n_steps() const { return n_steps_; }
  std::size_t n_paths() const { return n_paths_; }
  std::uint64_t seed() const { return seed_; }
  double horizon() const { return dt_ * static_cast<double>(n_steps_); }

  /// Writes the n_steps + 1 states of path p into out.
  void generate(std::size_t p, std::span<double> out) const {
    if (out.size() != n_steps_ + 1) throw std::invalid_argument("PathSet::generate: buffer size mismatch");
    const double sq = std::sqrt(dt_);
    double x = x0_;
    out[0] = x;
    std::array<double, 2> z{};
    for (std::size_t s = 0; s < n_steps_; ++s) {
      if (s % 2 == 0) z = rng::normal_pair(seed_, p, s / 2);
      double b, sigma;
      if (affine_) {
        b = (*affine_)[0].constant + (*affine_)[0].slope * x;
        sigma = (*affine_)[1].constant + (*affine_)[1].slope * x;
      } else {
        b = model_.b(x);
        sigma = model_.sigma(x);
      }
      x += b * dt_ + sigma * sq * z[s % 2];
      out[s + 1] = x;
    }
  }

  std::vector<double> path(std::size_t p) const {
    std::vector<double> out(n_steps_ + 1);
    generate(p, out);
    return out;
  }

  /// Dense n_paths x (n_steps + 1) row-major array.
  std::vector<double> materialize() const {
    std::vector<double> out(n_paths_ * (n_steps_ + 1));
    for (std::size_t p = 0; p < n_paths_; ++p) generate(p, std::span<double>(out).subspan(p * (n_steps_ + 1), n_steps_ + 1));
    return out;
  }

 private:
  DiffusionModel model_;
  double x0_;
  double dt_;
  std::size_t n_steps_;
  std::size_t n_paths_;
  std::uint64_t seed_;
  std::optional<std::array<AffineForm, 2>> affine_;
};

/// Paths on [0, T] with step dt: ceil(T / dt) steps, ignoring rounding noise in T / dt.
inline PathSet simulate_paths(const DiffusionModel& model, double x0, double dt, double T, std::size_t n_paths,
                              std::uint64_t seed) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("simulate_paths: dt must be positive");
  if (!(T >= dt)) throw std::invalid_argument("simulate_paths: T must be at least dt");
  const auto n_steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  return PathSet(model, x0, dt, n_steps, n_paths, seed);
}

struct SwitchEvent {
  double time = 0.0;
  int from = 0;
  int to = 0;
};

struct StrategyStats {
  double r = 0.0;
  double dt = 0.0;
  std::size_t n_steps = 0;
  int start_mode = 0;
  std::vector<double> profit;  // per path: int e^{-rs} psi_{u_s}(X_s) ds
  std::vector<double> cost;    // per path: sum_k e^{-r tau_k} g(X_{tau_k})
  std::vector<SwitchEvent> events;
  std::vector<std::size_t> event_begin;  // path p owns events[event_begin[p], event_begin[p + 1])
  std::uint64_t clamped_lookups = 0;
  std::uint64_t lookups = 0;

  std::size_t n_paths() const { return profit.size(); }
  std::span<const SwitchEvent> events_of(std::size_t p) const {
    return std::span<const SwitchEvent>(events).subspan(event_begin[p], event_begin[p + 1] - event_begin[p]);
  }
  double clamp_fraction() const { return lookups == 0 ? 0.0 : static_cast<double>(clamped_lookups) / lookups; }
};

/// Applies the feedback strategy of `regions` along every path of `paths`. At each
/// step the current mode's action is read at the grid node nearest the (clamped)
/// state; switches chain at a single date until a continue action is found.
/// Profit uses left-point quadrature with the exact one-step discount weight.
/// Results do not depend on `threads` (0 = hardware concurrency).
inline StrategyStats run_strategy(const PathSet& paths, const SwitchingRegions& regions,
                                  const SwitchingProblem& problem, int start_mode, unsigned threads = 0) {
  const int m = problem.modes();
  if (regions.modes() != m) throw std::invalid_argument("run_strategy: mode count mismatch");
  if (start_mode < 0 || start_mode >= m) throw std::invalid_argument("run_strategy: start mode out of range");
  const std::size_t n_paths = paths.n_paths();
  const std::size_t n_steps = paths.n_steps();
  const double dt = paths.dt();
  const double r = problem.r();
  const double weight = -std::expm1(-r * dt) / r;
  const double step_discount = std::exp(-r * dt);
  const Grid& g = regions.grid();

  StrategyStats stats;
  stats.r = r;
  stats.dt = dt;
  stats.n_steps = n_steps;
  stats.start_mode = start_mode;
  stats.profit.assign(n_paths, 0.0);
  stats.cost.assign(n_paths, 0.0);
  std::vector<std::vector<SwitchEvent>> per_path(n_paths);
  std::vector<std::uint64_t> clamped(n_paths, 0);

  auto worker = [&](std::size_t begin, std::size_t end) {
    std::vector<double> x(n_steps + 1);
    for (std::size_t p = begin; p < end; ++p) {
      paths.generate(p, x);
      int mode = start_mode;
      double disc = 1.0;
      double profit = 0.0, cost = 0.0;
      std::uint64_t clamp = 0;
      auto& ev = per_path[p];
      for (std::size_t s = 0; s < n_steps; ++s) {
        const double xs = x[s];
        if (!g.contains(xs)) ++clamp;
        const std::size_t k = g.nearest_index(xs);
        for (int chain = 0;; ++chain) {
          const int to = regions.target(mode, k);
          if (to == SwitchingRegions::kContinue) break;
          if (chain >= m) {
            throw std::runtime_error("run_strategy: more than " + std::to_string(m) +
                                     " chained switches at one date (non-positive switching costs?)");
          }
          ev.push_back({static_cast<double>(s) * dt, mode, to});
          cost += disc * problem.cost(mode, to).evaluate(xs);
          mode = to;
        }
        profit += disc * weight * problem.psi(mode).evaluate(xs);
        disc *= step_discount;
      }
      stats.profit[p] = profit;
      stats.cost[p] = cost;
      clamped[p] = clamp;
    }
  };

  unsigned n_workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  n_workers = static_cast<unsigned>(std::min<std::size_t>(n_workers, std::max<std::size_t>(n_paths, 1)));
  if (n_workers <= 1) {
    worker(0, n_paths);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_workers);
    const std::size_t chunk = (n_paths + n_workers - 1) / n_workers;
    for (unsigned w = 0; w < n_workers; ++w) {
      const std::size_t b = std::min(n_paths, w * chunk), e = std::min(n_paths, b + chunk);
      pool.emplace_back([&, w, b, e] {
        try {
          worker(b, e);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }

  stats.event_begin.reserve(n_paths + 1);
  stats.event_begin.push_back(0);
  for (std::size_t p = 0; p < n_paths; ++p) {
    stats.events.insert(stats.events.end(), per_path[p].begin(), per_path[p].end());
    stats.event_begin.push_back(stats.events.size());
    stats.clamped_lookups += clamped[p];
  }
  stats.lookups = static_cast<std::uint64_t>(n_paths) * n_steps;
  return stats;
}

struct PayoffEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
};

/// Mean and standard error of the per-path discounted profit minus discounted costs.
inline PayoffEstimate estimate_payoff(const StrategyStats& stats) {
  const std::size_t n = stats.n_paths();
  if (n == 0) throw std::invalid_argument("estimate_payoff: no paths");
  double sum = 0.0;
  for (std::size_t p = 0; p < n; ++p) sum += stats.profit[p] - stats.cost[p];
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double d = stats.profit[p] - stats.cost[p] - mean;
    ss += d * d;
  }
  const double se = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  return {mean, se, n};
}

struct TauDecayRow {
  int n = 0;
  double mean = 0.0;    // Monte Carlo mean of e^{-r tau_n}; paths with fewer switches count 0
  double n_mean = 0.0;  // n * mean
};

inline std::vector<TauDecayRow> tau_decay(const StrategyStats& stats, int max_n = 20) {
  if (stats.n_paths() == 0) throw std::invalid_argument("tau_decay: no paths");
  std::vector<double> sums(static_cast<std::size_t>(max_n), 0.0);
  for (std::size_t p = 0; p < stats.n_paths(); ++p) {
    const auto ev = stats.events_of(p);
    const std::size_t upto = std::min<std::size_t>(ev.size(), sums.size());
    for (std::size_t k = 0; k < upto; ++k) sums[k] += std::exp(-stats.r * ev[k].time);
  }
  std::vector<TauDecayRow> rows;
  for (int n = 1; n <= max_n; ++n) {
    const double mean = sums[static_cast<std::size_t>(n - 1)] / static_cast<double>(stats.n_paths());
    rows.push_back({n, mean, n * mean});
  }
  return rows;
}

}  // namespace modeswitch
