// Monotone finite-difference discretization of r I - A, with
// A = 1/2 sigma^2(x) d^2/dx^2 + b(x) d/dx, and the tridiagonal solves built on it.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "modeswitch/grid.hpp"
#include "modeswitch/problem.hpp"

namespace modeswitch {

class SingularSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BoundaryKind { ZeroCurvature, Dirichlet };

struct BoundaryCondition {
  BoundaryKind kind = BoundaryKind::ZeroCurvature;
  double left_value = 0.0;   // Dirichlet only
  double right_value = 0.0;  // Dirichlet only

  static BoundaryCondition zero_curvature() { return {}; }
  static BoundaryCondition dirichlet(double left, double right) {
    return {BoundaryKind::Dirichlet, left, right};
  }
};

/// How an end node's equation is formed.
///   Pde          the generator row itself (diffusion vanishes there and the
///                drift does not point out of the domain, so no condition is needed)
///   Extrapolate  v_0 - 2 v_1 + v_2 = 0 (mirrored at the right end)
///   Fixed        v = value
enum class EndRow { Pde, Extrapolate, Fixed };

/// Rows of r I - A on a grid. Interior rows are always generator rows.
struct TridiagOperator {
  double r = 0.0;
  std::vector<double> x;
  std::vector<double> lower;
  std::vector<double> diag;
  std::vector<double> upper;
  EndRow left = EndRow::Extrapolate;
  EndRow right = EndRow::Extrapolate;
  double left_value = 0.0;
  double right_value = 0.0;

  std::size_t size() const { return diag.size(); }

  bool is_generator_row(std::size_t k) const {
    if (k == 0) return left == EndRow::Pde;
    if (k + 1 == size()) return right == EndRow::Pde;
    return true;
  }

  /// Residual of node k's own equation (before any obstacle), i.e.
  /// ((r I - A) v)_k - f_k on generator rows, v - extrapolation or v - value at the ends.
  double row_residual(std::span<const double> v, std::span<const double> f, std::size_t k) const {
    const std::size_t n = size();
    if (k == 0 && left != EndRow::Pde) {
      return left == EndRow::Fixed ? v[0] - left_value : v[0] - 2.0 * v[1] + v[2];
    }
    if (k + 1 == n && right != EndRow::Pde) {
      return right == EndRow::Fixed ? v[k] - right_value : v[k] - 2.0 * v[k - 1] + v[k - 2];
    }
    double s = diag[k] * v[k] - f[k];
    if (k > 0) s += lower[k] * v[k - 1];
    if (k + 1 < n) s += upper[k] * v[k + 1];
    return s;
  }
};

/// Central differences for diffusion, first-order upwind for drift. Every
/// generator row of r I - A has non-positive off-diagonals and a positive,
/// strictly dominant diagonal.
inline TridiagOperator discretize_generator(const DiffusionModel& model, const Grid& grid, double r,
                                            const BoundaryCondition& bc = {}) {
  if (!(r > 0.0)) throw std::invalid_argument("discount rate must be positive");
  const std::size_t n = grid.size();
  TridiagOperator op;
  op.r = r;
  op.x.assign(grid.nodes().begin(), grid.nodes().end());
  op.lower.assign(n, 0.0);
  op.diag.assign(n, r);
  op.upper.assign(n, 0.0);

  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double hm = op.x[k] - op.x[k - 1];
    const double hp = op.x[k + 1] - op.x[k];
    const double s = model.sigma(op.x[k]);
    const double b = model.b(op.x[k]);
    const double d = 0.5 * s * s;
    double lo = 2.0 * d / (hm * (hm + hp));
    double up = 2.0 * d / (hp * (hm + hp));
    if (b > 0.0) up += b / hp;
    if (b < 0.0) lo += -b / hm;
    op.lower[k] = -lo;
    op.upper[k] = -up;
    op.diag[k] = r + lo + up;
    if (!(op.diag[k] > 0.0) || !(op.diag[k] >= lo + up) || lo < 0.0 || up < 0.0) {
      throw std::logic_error("generator row is not an M-matrix row");
    }
  }

  auto natural = [&](std::size_t k, bool is_left) {
    const double s = model.sigma(op.x[k]);
    const double b = model.b(op.x[k]);
    return s == 0.0 && (is_left ? b >= 0.0 : b <= 0.0);
  };
  if (natural(0, true)) {
    op.left = EndRow::Pde;
    const double b = model.b(op.x[0]);
    const double h = op.x[1] - op.x[0];
    op.upper[0] = -b / h;
    op.diag[0] = r + b / h;
  } else if (bc.kind == BoundaryKind::Dirichlet) {
    op.left = EndRow::Fixed;
    op.left_value = bc.left_value;
  } else {
    op.left = EndRow::Extrapolate;
  }
  if (natural(n - 1, false)) {
    op.right = EndRow::Pde;
    const double b = model.b(op.x[n - 1]);
    const double h = op.x[n - 1] - op.x[n - 2];
    op.lower[n - 1] = b / h;
    op.diag[n - 1] = r - b / h;
  } else if (bc.kind == BoundaryKind::Dirichlet) {
    op.right = EndRow::Fixed;
    op.right_value = bc.right_value;
  } else {
    op.right = EndRow::Extrapolate;
  }
  return op;
}

namespace detail {

/// Thomas algorithm. Throws SingularSystem on a vanishing pivot.
inline std::vector<double> thomas(std::vector<double> l, std::vector<double> d, std::vector<double> u,
                                  std::vector<double> f) {
  const std::size_t n = d.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      const double w = l[k] / d[k - 1];
      d[k] -= w * u[k - 1];
      f[k] -= w * f[k - 1];
    }
    if (!(std::abs(d[k]) > 0.0) || !std::isfinite(d[k])) throw SingularSystem("singular tridiagonal system");
  }
  std::vector<double> v(n);
  v[n - 1] = f[n - 1] / d[n - 1];
  for (std::size_t k = n - 1; k-- > 0;) v[k] = (f[k] - u[k] * v[k + 1]) / d[k];
  return v;
}

}  // namespace detail

/// Solves the system where node k uses its own row unless pinned[k], in which
/// case v_k = pin[k]. Extrapolated end rows are eliminated into their
/// neighbours so the remaining system stays tridiagonal.
inline std::vector<double> solve_with_policy(const TridiagOperator& op, std::span<const double> rhs,
                                             std::span<const std::uint8_t> pinned,
                                             std::span<const double> pin) {
  const std::size_t n = op.size();
  std::vector<double> l(n), d(n), u(n), f(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (pinned[k]) {
      l[k] = 0.0;
      d[k] = 1.0;
      u[k] = 0.0;
      f[k] = pin[k];
    } else {
      l[k] = op.lower[k];
      d[k] = op.diag[k];
      u[k] = op.upper[k];
      f[k] = rhs[k];
    }
  }
  const bool extrap_left = !pinned[0] && op.left == EndRow::Extrapolate;
  const bool extrap_right = !pinned[n - 1] && op.right == EndRow::Extrapolate;
  if (extrap_left && extrap_right && n < 4) throw SingularSystem("extrapolated ends need at least 4 nodes");
  if (!pinned[0] && op.left == EndRow::Fixed) {
    l[0] = 0.0; d[0] = 1.0; u[0] = 0.0; f[0] = op.left_value;
  }
  if (!pinned[n - 1] && op.right == EndRow::Fixed) {
    l[n - 1] = 0.0; d[n - 1] = 1.0; u[n - 1] = 0.0; f[n - 1] = op.right_value;
  }
  if (extrap_left) {
    // v_0 = 2 v_1 - v_2 substituted into row 1; row 0 becomes a placeholder.
    d[1] += 2.0 * l[1];
    u[1] -= l[1];
    l[1] = 0.0;
    l[0] = 0.0; d[0] = 1.0; u[0] = 0.0; f[0] = 0.0;
  }
  if (extrap_right) {
    d[n - 2] += 2.0 * u[n - 2];
    l[n - 2] -= u[n - 2];
    u[n - 2] = 0.0;
    l[n - 1] = 0.0; d[n - 1] = 1.0; u[n - 1] = 0.0; f[n - 1] = 0.0;
  }
  std::vector<double> v = detail::thomas(std::move(l), std::move(d), std::move(u), std::move(f));
  if (extrap_left) v[0] = 2.0 * v[1] - v[2];
  if (extrap_right) v[n - 1] = 2.0 * v[n - 2] - v[n - 3];
  return v;
}

}  // namespace modeswitch
