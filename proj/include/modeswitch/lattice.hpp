// Recombining trinomial lattice for the state diffusion, with backward-induction
// dynamic programming for the switching system and for single-obstacle stopping.
//
// The lattice is a discrete-time oracle independent of the finite-difference
// solvers: values on [0, T] with a zero terminal layer approximate the
// infinite-horizon values up to a tail that horizon_for_tolerance controls.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "modeswitch/expr.hpp"
#include "modeswitch/problem.hpp"

namespace modeswitch {

struct LatticeConfig {
  double x0 = 0.0;
  double T = 0.0;
  int n_steps = 2000;
  /// Multiplier C in the tail estimate C (1 + |x0|^gamma) e^{(C_gamma - r) T}.
  double tail_constant = 1.0;

  double dt() const { return T / n_steps; }

  void check() const {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("lattice horizon T must be positive and finite");
    if (n_steps < 1) throw std::invalid_argument("lattice n_steps must be at least 1");
    if (!std::isfinite(x0)) throw std::invalid_argument("lattice x0 must be finite");
    if (!(tail_constant > 0.0)) throw std::invalid_argument("lattice tail_constant must be positive");
  }
};

/// Smallest T with tail_constant (1 + |x0|^gamma) e^{(C_gamma - r) T} < eps, where
/// C_gamma is the moment exponent of order gamma. Throws when C_gamma >= r, since the
/// tail then does not decay.
inline double horizon_for_tolerance(const SwitchingProblem& problem, double x0, double eps,
                                    double tail_constant = 1.0) {
  if (!(eps > 0.0)) throw std::invalid_argument("horizon tolerance eps must be positive");
  if (!(tail_constant > 0.0)) throw std::invalid_argument("tail_constant must be positive");
  const double c_gamma = moment_exponent(problem.model(), problem.gamma());
  const double rate = problem.r() - c_gamma;
  if (!(rate > 0.0)) {
    throw std::domain_error("H4 violated: moment exponent C_gamma = " + std::to_string(c_gamma) +
                            " >= r = " + std::to_string(problem.r()) + "; no finite horizon exists");
  }
  const double scale = tail_constant * (1.0 + std::pow(std::abs(x0), problem.gamma()));
  return std::max(0.0, std::log(scale / eps) / rate);
}

/// Time-homogeneous trinomial lattice. Node j in [-n, n] has the same state and
/// branch probabilities on every layer it belongs to; layer t holds j in [-t, t].
class Lattice {
 public:
  enum class Kind { Constant, LogSpace, Arithmetic };

  Kind kind() const { return kind_; }
  int n_steps() const { return n_; }
  double dt() const { return dt_; }
  double x0() const { return x0_; }
  /// Node spacing: in log(|x|) for LogSpace, in x for Arithmetic, 0 for Constant.
  double spacing() const { return spacing_; }
  /// Terminal probability mass on frozen nodes (Arithmetic kind only; otherwise 0).
  double frozen_mass() const { return frozen_mass_; }

  double state(int j) const { return states_[idx(j)]; }
  double p_up(int j) const { return pu_[idx(j)]; }
  double p_mid(int j) const { return pm_[idx(j)]; }
  double p_down(int j) const { return pd_[idx(j)]; }

  /// Expected value of next-layer values `next` (indexed j + n) seen from node j.
  double expectation(const std::vector<double>& next, int j) const {
    const std::size_t k = idx(j);
    return pu_[k] * next[k + 1] + pm_[k] * next[k] + pd_[k] * next[k - 1];
  }

 private:
  friend Lattice build_lattice(const DiffusionModel& model, const LatticeConfig& cfg, double edge_mass_tol);

  std::size_t idx(int j) const { return static_cast<std::size_t>(j + n_); }

  Kind kind_ = Kind::Constant;
  int n_ = 0;
  double dt_ = 0.0;
  double x0_ = 0.0;
  double spacing_ = 0.0;
  double frozen_mass_ = 0.0;
  std::vector<double> states_, pu_, pm_, pd_;
};

namespace detail {

/// Branch probabilities matching local mean m1 exactly and variance var on a
/// three-point stencil of width dx. The variance is raised to the smallest value the
/// stencil can carry for that mean, an excess of at most |m1| dx = O(dt^{3/2}).
struct Branch {
  double up, mid, down;
};

inline Branch match_moments(double m1, double var, double dx) {
  const double q = m1 / dx;
  const double floor = std::abs(q) - q * q;
  const double s2 = std::max(var / (dx * dx), floor) + q * q;
  return {0.5 * (s2 + q), 1.0 - s2, 0.5 * (s2 - q)};
}

inline bool valid(const Branch& b) {
  constexpr double tol = 1e-14;
  return b.up >= -tol && b.mid >= -tol && b.down >= -tol && b.up <= 1 + tol && b.mid <= 1 + tol &&
         b.down <= 1 + tol;
}

}  // namespace detail

/// Purely linear coefficients (b = b1 x, sigma = s1 x) use log(|x|) nodes with the
/// exact log-increment drift (b1 - s1^2/2) dt and variance s1^2 dt; other affine
/// coefficients use an x-uniform lattice with local moment matching. Throws
/// std::domain_error if the node at x0 cannot carry valid probabilities, or if more
/// than edge_mass_tol of the terminal distribution sits on nodes that cannot.
inline Lattice build_lattice(const DiffusionModel& model, const LatticeConfig& cfg, double edge_mass_tol = 1e-10) {
  cfg.check();
  if (!model.is_affine()) throw std::invalid_argument("lattice requires affine drift and volatility");
  Lattice lat;
  lat.n_ = cfg.n_steps;
  lat.dt_ = cfg.dt();
  lat.x0_ = cfg.x0;
  const std::size_t width = 2 * static_cast<std::size_t>(lat.n_) + 1;
  lat.states_.assign(width, cfg.x0);
  lat.pu_.assign(width, 0.0);
  lat.pm_.assign(width, 1.0);
  lat.pd_.assign(width, 0.0);
  const double dt = lat.dt_;

  auto fail = [&](int j) {
    throw std::domain_error("lattice branch probabilities leave [0, 1] at node " + std::to_string(j) +
                            " (dt = " + std::to_string(dt) + " too large); increase n_steps");
  };

  if (model.is_purely_linear()) {
    const double b1 = model.linear_drift();
    const double s1 = std::abs(model.linear_volatility());
    const double nu = b1 - 0.5 * s1 * s1;
    const double dy = s1 > 0.0 ? s1 * std::sqrt(3.0 * dt) : std::abs(nu) * dt;
    if (cfg.x0 == 0.0 || dy == 0.0) return lat;  // the origin, or a fixed point
    lat.kind_ = Lattice::Kind::LogSpace;
    lat.spacing_ = dy;
    const auto br = detail::match_moments(nu * dt, s1 * s1 * dt, dy);
    if (!detail::valid(br)) fail(0);
    for (int j = -lat.n_; j <= lat.n_; ++j) {
      const std::size_t k = lat.idx(j);
      lat.states_[k] = cfg.x0 * std::exp(j * dy);
      lat.pu_[k] = br.up;
      lat.pm_[k] = br.mid;
      lat.pd_[k] = br.down;
    }
    return lat;
  }

  const double dx = std::max(std::abs(model.sigma(cfg.x0)) * std::sqrt(3.0 * dt), std::abs(model.b(cfg.x0)) * dt);
  if (dx == 0.0) return lat;  // b(x0) = sigma(x0) = 0: x0 is a fixed point of the affine SDE
  lat.kind_ = Lattice::Kind::Arithmetic;
  lat.spacing_ = dx;
  // Match moments outward from x0. Beyond the first node on each side where that is
  // impossible (volatility or drift too large for the spacing), nodes are frozen;
  // the probability mass that reaches them is measured below and must be negligible.
  for (int side : {1, -1}) {
    bool frozen = false;
    for (int a = side > 0 ? 0 : 1; a <= lat.n_; ++a) {
      const int j = side * a;
      const std::size_t k = lat.idx(j);
      const double x = cfg.x0 + j * dx;
      lat.states_[k] = x;
      if (frozen) continue;
      const double s = model.sigma(x);
      const auto br = detail::match_moments(model.b(x) * dt, s * s * dt, dx);
      if (!detail::valid(br)) {
        if (j == 0) fail(0);
        frozen = true;
        continue;
      }
      lat.pu_[k] = br.up;
      lat.pm_[k] = br.mid;
      lat.pd_[k] = br.down;
    }
  }
  // Forward induction of the node distribution; accumulate mass on frozen nodes.
  std::vector<double> dist(width, 0.0), nxt(width, 0.0);
  dist[lat.idx(0)] = 1.0;
  double frozen_mass = 0.0;
  for (int t = 0; t < lat.n_; ++t) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (int j = -t; j <= t; ++j) {
      const std::size_t k = lat.idx(j);
      if (dist[k] == 0.0) continue;
      nxt[k + 1] += dist[k] * lat.pu_[k];
      nxt[k] += dist[k] * lat.pm_[k];
      nxt[k - 1] += dist[k] * lat.pd_[k];
    }
    std::swap(dist, nxt);
  }
  for (int j = -lat.n_; j <= lat.n_; ++j) {
    const std::size_t k = lat.idx(j);
    const double x = lat.states_[k];
    const double s = model.sigma(x);
    if (lat.pm_[k] == 1.0 && !(model.b(x) == 0.0 && s == 0.0)) frozen_mass += dist[k];
  }
  lat.frozen_mass_ = frozen_mass;
  if (frozen_mass > edge_mass_tol) {
    throw std::domain_error("lattice probability mass " + std::to_string(frozen_mass) +
                            " reaches nodes without valid branch probabilities (dt = " + std::to_string(dt) +
                            " too large for the volatility range); increase n_steps");
  }
  return lat;
}

/// Backward-induction values. `root` holds one value per mode at (t = 0, x0).
/// When requested, `layers[t]` holds layer t mode-major: value of mode i at node j
/// is layers[t][i * (2t + 1) + (j + t)].
struct LatticeValues {
  std::vector<double> root;
  std::vector<std::vector<double>> layers;

  double at(std::size_t t, int i, int j) const {
    const std::size_t w = 2 * t + 1;
    return layers.at(t).at(static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j + static_cast<int>(t)));
  }
};

namespace detail {

/// Discount weight of a unit profit rate over one step: int_0^dt e^{-rs} ds.
inline double step_weight(double r, double dt) { return -std::expm1(-r * dt) / r; }

inline void keep_layer(LatticeValues& out, const std::vector<std::vector<double>>& v, int t, int n) {
  const std::size_t w = 2 * static_cast<std::size_t>(t) + 1;
  std::vector<double> layer(v.size() * w);
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (int j = -t; j <= t; ++j) layer[i * w + static_cast<std::size_t>(j + t)] = v[i][static_cast<std::size_t>(j + n)];
  }
  out.layers[static_cast<std::size_t>(t)] = std::move(layer);
}

}  // namespace detail

/// Switching dynamic programme with zero terminal values:
///   V_i(t) = max( psi_i w + e^{-r dt} E[V_i(t+dt)],  max_{j != i}(-g_ij + V_j(t)) ),
/// w = (1 - e^{-r dt}) / r. Same-date switch chains are resolved by up to m - 1
/// Jacobi passes over the switch branch.
inline LatticeValues switching_dp(const Lattice& lat, const SwitchingProblem& problem, bool keep_layers = false) {
  const int n = lat.n_steps();
  const int m = problem.modes();
  const std::size_t width = 2 * static_cast<std::size_t>(n) + 1;
  const double disc = std::exp(-problem.r() * lat.dt());
  const double w = detail::step_weight(problem.r(), lat.dt());

  std::vector<std::vector<double>> psi(m, std::vector<double>(width));
  std::vector<std::vector<double>> cost(static_cast<std::size_t>(m * m));
  for (int j = -n; j <= n; ++j) {
    const std::size_t k = static_cast<std::size_t>(j + n);
    const double x = lat.state(j);
    for (int i = 0; i < m; ++i) psi[i][k] = problem.psi(i).evaluate(x) * w;
  }
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < m; ++l) {
      if (i == l) continue;
      auto& c = cost[static_cast<std::size_t>(i * m + l)];
      c.resize(width);
      for (int j = -n; j <= n; ++j) c[static_cast<std::size_t>(j + n)] = problem.cost(i, l).evaluate(lat.state(j));
    }
  }

  LatticeValues out;
  if (keep_layers) out.layers.resize(static_cast<std::size_t>(n) + 1);
  std::vector<std::vector<double>> next(m, std::vector<double>(width, 0.0));
  std::vector<std::vector<double>> cur(m, std::vector<double>(width, 0.0));
  std::vector<double> prev(static_cast<std::size_t>(m));
  if (keep_layers) detail::keep_layer(out, next, n, n);

  for (int t = n - 1; t >= 0; --t) {
    for (int j = -t; j <= t; ++j) {
      const std::size_t k = static_cast<std::size_t>(j + n);
      for (int i = 0; i < m; ++i) cur[i][k] = psi[i][k] + disc * lat.expectation(next[i], j);
      for (int pass = 0; pass < m - 1; ++pass) {
        for (int i = 0; i < m; ++i) prev[i] = cur[i][k];
        bool changed = false;
        for (int i = 0; i < m; ++i) {
          double best = prev[i];
          for (int l = 0; l < m; ++l) {
            if (l == i) continue;
            const double cand = -cost[static_cast<std::size_t>(i * m + l)][k] + prev[l];
            if (cand > best) best = cand;
          }
          if (best != prev[i]) changed = true;
          cur[i][k] = best;
        }
        if (!changed) break;
      }
    }
    std::swap(cur, next);
    if (keep_layers) detail::keep_layer(out, next, t, n);
  }
  out.root.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) out.root[i] = next[i][static_cast<std::size_t>(n)];
  return out;
}

/// Optimal stopping value at the root with running profit f and stopping reward h:
///   V(T) = h,  V(t) = max( h, f w + e^{-r dt} E[V(t+dt)] ).
inline double snell_stop(const Lattice& lat, const Expr& running, const Expr& terminal_reward, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("discount rate r must be positive");
  const int n = lat.n_steps();
  const std::size_t width = 2 * static_cast<std::size_t>(n) + 1;
  const double disc = std::exp(-r * lat.dt());
  const double w = detail::step_weight(r, lat.dt());
  std::vector<double> f(width), h(width), next(width), cur(width);
  for (int j = -n; j <= n; ++j) {
    const std::size_t k = static_cast<std::size_t>(j + n);
    f[k] = running.evaluate(lat.state(j)) * w;
    h[k] = terminal_reward.evaluate(lat.state(j));
    next[k] = h[k];
  }
  for (int t = n - 1; t >= 0; --t) {
    for (int j = -t; j <= t; ++j) {
      const std::size_t k = static_cast<std::size_t>(j + n);
      cur[k] = std::max(h[k], f[k] + disc * lat.expectation(next, j));
    }
    std::swap(cur, next);
  }
  return next[static_cast<std::size_t>(n)];
}

}  // namespace modeswitch
