// Finite-difference solvers for the switching system
//
//   min{ v_i - max_{j != i}(-g_ij + v_j),  r v_i - A v_i - psi_i } = 0,  i = 1..m
//
// on a truncated grid: a monotone Picard iteration over single-obstacle
// problems, and a penalized semismooth-Newton scheme.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "modeswitch/generator.hpp"
#include "modeswitch/grid.hpp"
#include "modeswitch/problem.hpp"

namespace modeswitch {

/// m x n samples of the value functions, mode-major.
class ValueField {
 public:
  ValueField() = default;
  ValueField(Grid grid, int modes, double fill = 0.0)
      : grid_(std::move(grid)), modes_(modes), values_(static_cast<std::size_t>(modes) * grid_.size(), fill) {}

  const Grid& grid() const { return grid_; }
  int modes() const { return modes_; }
  std::size_t nodes() const { return grid_.size(); }

  double& operator()(int i, std::size_t k) { return values_[static_cast<std::size_t>(i) * nodes() + k]; }
  double operator()(int i, std::size_t k) const { return values_[static_cast<std::size_t>(i) * nodes() + k]; }

  std::span<double> mode(int i) { return {values_.data() + static_cast<std::size_t>(i) * nodes(), nodes()}; }
  std::span<const double> mode(int i) const {
    return {values_.data() + static_cast<std::size_t>(i) * nodes(), nodes()};
  }

  double at(int i, double x) const { return grid_.interpolate(mode(i), x); }

  double sup_norm() const {
    double s = 0.0;
    for (double v : values_) s = std::max(s, std::abs(v));
    return s;
  }

  std::span<const double> raw() const { return values_; }

 private:
  Grid grid_;
  int modes_ = 0;
  std::vector<double> values_;
};

inline double sup_distance(const ValueField& a, const ValueField& b) {
  if (a.raw().size() != b.raw().size()) throw std::invalid_argument("sup_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.raw().size(); ++k) s = std::max(s, std::abs(a.raw()[k] - b.raw()[k]));
  return s;
}

struct SolveConfig {
  double outer_tol = 1e-8;
  int max_outer = 500;
  int max_policy_iters = 1000;
  std::vector<double> penalty_schedule = default_penalty_schedule();
  BoundaryKind boundary = BoundaryKind::ZeroCurvature;
  /// Per-mode Dirichlet data, used when boundary == Dirichlet.
  std::vector<Expr> dirichlet;

  static std::vector<double> default_penalty_schedule() {
    std::vector<double> s;
    for (int e = 1; e <= 12; ++e) s.push_back(std::pow(10.0, e));
    return s;
  }

  void check() const {
    if (!(outer_tol > 0.0)) throw std::invalid_argument("outer_tol must be positive");
    if (max_outer < 1 || max_policy_iters < 1) throw std::invalid_argument("iteration limits must be >= 1");
    if (penalty_schedule.empty()) throw std::invalid_argument("penalty schedule is empty");
    for (std::size_t k = 0; k < penalty_schedule.size(); ++k) {
      if (!(penalty_schedule[k] > 0.0) || (k > 0 && !(penalty_schedule[k] > penalty_schedule[k - 1]))) {
        throw std::invalid_argument("penalty schedule must be positive and strictly increasing");
      }
    }
  }
};

struct ResidualReport {
  std::vector<double> complementarity;      // per mode, interior nodes
  std::vector<double> obstacle_violation;   // per mode, all nodes

  double max_complementarity() const {
    return complementarity.empty() ? 0.0 : *std::max_element(complementarity.begin(), complementarity.end());
  }
  double max_violation() const {
    return obstacle_violation.empty() ? 0.0
                                      : *std::max_element(obstacle_violation.begin(), obstacle_violation.end());
  }
};

struct SolveReport {
  ValueField field;
  int outer_iterations = 0;
  std::vector<double> sup_diffs;
  bool monotone = true;
  bool converged = false;
  ResidualReport residual;
};

struct ObstacleResult {
  std::vector<double> values;
  std::vector<std::uint8_t> active;  // 1 where pinned to the obstacle
  int iterations = 0;
  bool converged = false;
};

/// Solves (r I - A) v = psi, the value of never switching.
inline std::vector<double> solve_unconstrained(const TridiagOperator& op, std::span<const double> psi) {
  if (psi.size() != op.size()) throw std::invalid_argument("solve_unconstrained: size mismatch");
  const std::vector<std::uint8_t> none(op.size(), 0);
  return solve_with_policy(op, psi, none, psi);
}

/// Howard policy iteration for min{u - h, (r I - A) u - f} = 0. Each step
/// pins the nodes whose obstacle row is the smaller of the two residuals.
inline ObstacleResult solve_obstacle(const TridiagOperator& op, std::span<const double> f,
                                     std::span<const double> h, int max_policy_iters = 200,
                                     std::span<const std::uint8_t> initial_policy = {}) {
  const std::size_t n = op.size();
  if (f.size() != n || h.size() != n) throw std::invalid_argument("solve_obstacle: size mismatch");
  ObstacleResult res;
  res.active.assign(n, 0);
  if (initial_policy.size() == n) res.active.assign(initial_policy.begin(), initial_policy.end());
  for (int it = 1; it <= max_policy_iters; ++it) {
    res.values = solve_with_policy(op, f, res.active, h);
    res.iterations = it;
    bool changed = false;
    for (std::size_t k = 0; k < n; ++k) {
      const double own = op.row_residual(res.values, f, k);
      const std::uint8_t pin = (res.values[k] - h[k]) < own ? 1 : 0;
      if (pin != res.active[k]) {
        res.active[k] = pin;
        changed = true;
      }
    }
    if (!changed) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

namespace detail {

/// M_i v = max_{j != i}(-g_ij + v_j) at every node, with the lowest maximizing j.
struct ObstacleData {
  std::vector<double> value;
  std::vector<int> target;
};

inline ObstacleData obstacle_of(const ValueField& v, const std::vector<std::vector<std::vector<double>>>& cost,
                                int i) {
  const std::size_t n = v.nodes();
  ObstacleData o;
  o.value.assign(n, -std::numeric_limits<double>::infinity());
  o.target.assign(n, -1);
  for (int j = 0; j < v.modes(); ++j) {
    if (j == i) continue;
    for (std::size_t k = 0; k < n; ++k) {
      const double c = -cost[i][j][k] + v(j, k);
      if (c > o.value[k]) {
        o.value[k] = c;
        o.target[k] = j;
      }
    }
  }
  return o;
}

inline std::vector<std::vector<std::vector<double>>> sample_costs(const SwitchingProblem& p, const Grid& g) {
  const int m = p.modes();
  std::vector<std::vector<std::vector<double>>> c(m, std::vector<std::vector<double>>(m));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      c[i][j].resize(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) c[i][j][k] = p.cost(i, j).evaluate(g[k]);
    }
  }
  return c;
}

inline std::vector<double> sample(const Expr& e, const Grid& g) {
  std::vector<double> s(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) s[k] = e.evaluate(g[k]);
  return s;
}

inline std::vector<TridiagOperator> mode_operators(const SwitchingProblem& p, const Grid& g,
                                                   const SolveConfig& cfg) {
  std::vector<TridiagOperator> ops;
  for (int i = 0; i < p.modes(); ++i) {
    BoundaryCondition bc;
    if (cfg.boundary == BoundaryKind::Dirichlet) {
      if (cfg.dirichlet.size() != static_cast<std::size_t>(p.modes())) {
        throw std::invalid_argument("Dirichlet boundary needs one expression per mode");
      }
      bc = BoundaryCondition::dirichlet(cfg.dirichlet[i].evaluate(g.x_min()), cfg.dirichlet[i].evaluate(g.x_max()));
    }
    ops.push_back(discretize_generator(p.model(), g, p.r(), bc));
  }
  return ops;
}

}  // namespace detail

/// Per-mode sup over interior nodes of |min(v_i - M_i v, (r I - A) v_i - psi_i)|,
/// and the obstacle violation max(0, M_i v - v_i) over all nodes.
inline ResidualReport system_residual(const ValueField& field, const SwitchingProblem& problem,
                                      const TridiagOperator& op) {
  const std::size_t n = field.nodes();
  if (op.size() != n || field.modes() != problem.modes()) throw std::invalid_argument("system_residual: shape mismatch");
  const auto cost = detail::sample_costs(problem, field.grid());
  ResidualReport rep;
  for (int i = 0; i < field.modes(); ++i) {
    const auto obs = detail::obstacle_of(field, cost, i);
    const auto psi = detail::sample(problem.psi(i), field.grid());
    const auto v = field.mode(i);
    double comp = 0.0;
    double viol = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      viol = std::max(viol, obs.value[k] - v[k]);
      if (k == 0 || k + 1 == n) continue;
      double pde = op.diag[k] * v[k] + op.lower[k] * v[k - 1] + op.upper[k] * v[k + 1] - psi[k];
      comp = std::max(comp, std::abs(std::min(v[k] - obs.value[k], pde)));
    }
    rep.complementarity.push_back(comp);
    rep.obstacle_violation.push_back(std::max(0.0, viol));
  }
  return rep;
}

/// Monotone iteration v^{n,i} = obstacle solve with obstacle M_i v^{n-1}, started
/// from the no-switching values. The first outer iteration is v^0 itself.
inline SolveReport picard_solve(const SwitchingProblem& problem, const Grid& grid, const SolveConfig& cfg = {}) {
  cfg.check();
  const int m = problem.modes();
  const auto ops = detail::mode_operators(problem, grid, cfg);
  const auto cost = detail::sample_costs(problem, grid);
  std::vector<std::vector<double>> psi;
  for (int i = 0; i < m; ++i) psi.push_back(detail::sample(problem.psi(i), grid));

  SolveReport rep;
  ValueField v(grid, m);
  for (int i = 0; i < m; ++i) {
    const auto u = solve_unconstrained(ops[i], psi[i]);
    std::copy(u.begin(), u.end(), v.mode(i).begin());
  }
  rep.outer_iterations = 1;
  rep.converged = m == 1;

  std::vector<std::vector<std::uint8_t>> policy(m);
  bool policy_ok = true;
  while (!rep.converged && policy_ok && rep.outer_iterations < cfg.max_outer) {
    ValueField next(grid, m);
    for (int i = 0; i < m; ++i) {
      const auto obs = detail::obstacle_of(v, cost, i);
      auto r = solve_obstacle(ops[i], psi[i], obs.value, cfg.max_policy_iters, policy[i]);
      policy_ok = policy_ok && r.converged;
      policy[i] = std::move(r.active);
      std::copy(r.values.begin(), r.values.end(), next.mode(i).begin());
    }
    ++rep.outer_iterations;
    const double scale = std::max(1.0, v.sup_norm());
    for (std::size_t k = 0; k < v.raw().size(); ++k) {
      if (next.raw()[k] < v.raw()[k] - 1e-12 * scale) rep.monotone = false;
    }
    const double diff = sup_distance(next, v);
    rep.sup_diffs.push_back(diff);
    v = std::move(next);
    if (diff < cfg.outer_tol && policy_ok) rep.converged = true;
  }
  rep.field = std::move(v);
  rep.residual = system_residual(rep.field, problem, ops.front());
  return rep;
}

/// For each penalty level n solves r v_i - A v_i - psi_i - n (v_i - M_i v)^- = 0
/// by semismooth Newton on the active set, warm-started from the previous level.
inline SolveReport penalized_solve(const SwitchingProblem& problem, const Grid& grid, const SolveConfig& cfg = {}) {
  cfg.check();
  const int m = problem.modes();
  const std::size_t n = grid.size();
  const auto ops = detail::mode_operators(problem, grid, cfg);
  const auto cost = detail::sample_costs(problem, grid);
  std::vector<std::vector<double>> psi;
  for (int i = 0; i < m; ++i) psi.push_back(detail::sample(problem.psi(i), grid));

  ValueField v(grid, m);
  for (int i = 0; i < m; ++i) {
    const auto u = solve_unconstrained(ops[i], psi[i]);
    std::copy(u.begin(), u.end(), v.mode(i).begin());
  }

  using SpMat = Eigen::SparseMatrix<double>;
  const auto index = [n](int i, std::size_t k) { return static_cast<Eigen::Index>(static_cast<std::size_t>(i) * n + k); };
  const Eigen::Index dim = static_cast<Eigen::Index>(m * n);

  // Active-set encoding: target mode per (i, k), or -1 when the penalty is off.
  auto active_set = [&](const ValueField& f) {
    std::vector<int> act(static_cast<std::size_t>(m) * n, -1);
    for (int i = 0; i < m; ++i) {
      const auto obs = detail::obstacle_of(f, cost, i);
      for (std::size_t k = 0; k < n; ++k) {
        if (obs.value[k] - f(i, k) > 0.0) act[static_cast<std::size_t>(i) * n + k] = obs.target[k];
      }
    }
    return act;
  };

  auto newton_step = [&](const std::vector<int>& act, double pen) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(m) * n * 4);
    Eigen::VectorXd rhs(dim);
    for (int i = 0; i < m; ++i) {
      const auto& op = ops[i];
      for (std::size_t k = 0; k < n; ++k) {
        const Eigen::Index row = index(i, k);
        const bool left_end = k == 0 && op.left != EndRow::Pde;
        const bool right_end = k + 1 == n && op.right != EndRow::Pde;
        if (left_end || right_end) {
          const EndRow kind = left_end ? op.left : op.right;
          trip.emplace_back(row, row, 1.0);
          if (kind == EndRow::Fixed) {
            rhs[row] = left_end ? op.left_value : op.right_value;
          } else {
            const std::size_t k1 = left_end ? 1 : n - 2;
            const std::size_t k2 = left_end ? 2 : n - 3;
            trip.emplace_back(row, index(i, k1), -2.0);
            trip.emplace_back(row, index(i, k2), 1.0);
            rhs[row] = 0.0;
          }
        } else {
          trip.emplace_back(row, row, op.diag[k]);
          if (k > 0 && op.lower[k] != 0.0) trip.emplace_back(row, index(i, k - 1), op.lower[k]);
          if (k + 1 < n && op.upper[k] != 0.0) trip.emplace_back(row, index(i, k + 1), op.upper[k]);
          rhs[row] = psi[i][k];
        }
        const int j = act[static_cast<std::size_t>(i) * n + k];
        if (j >= 0) {
          trip.emplace_back(row, row, pen);
          trip.emplace_back(row, index(j, k), -pen);
          rhs[row] -= pen * cost[i][j][k];
        }
      }
    }
    SpMat a(dim, dim);
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw SingularSystem("penalized system factorization failed");
    const Eigen::VectorXd sol = lu.solve(rhs);
    ValueField out(grid, m);
    for (int i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < n; ++k) out(i, k) = sol[index(i, k)];
    }
    return out;
  };

  SolveReport rep;
  rep.outer_iterations = 0;
  for (double pen : cfg.penalty_schedule) {
    ValueField level = v;
    auto act = active_set(level);
    std::vector<int> prev_act;
    bool settled = false;
    for (int it = 0; it < cfg.max_policy_iters; ++it) {
      level = newton_step(act, pen);
      auto next = active_set(level);
      // At large penalties the active set can alternate between two states whose
      // iterates differ only at the penalization error; a repeat counts as settled.
      if (next == act || next == prev_act) {
        settled = true;
        break;
      }
      prev_act = std::exchange(act, std::move(next));
    }
    ++rep.outer_iterations;
    const double scale = std::max(1.0, v.sup_norm());
    for (std::size_t k = 0; k < v.raw().size(); ++k) {
      if (level.raw()[k] < v.raw()[k] - 1e-12 * scale) rep.monotone = false;
    }
    const double diff = sup_distance(level, v);
    rep.sup_diffs.push_back(diff);
    v = std::move(level);
    if (!settled) break;
    if (diff < cfg.outer_tol) {
      rep.converged = true;
      break;
    }
  }
  rep.field = std::move(v);
  rep.residual = system_residual(rep.field, problem, ops.front());
  return rep;
}

}  // namespace modeswitch
