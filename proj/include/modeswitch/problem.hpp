// Diffusion model, switching problem data and the standing-assumption checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "modeswitch/expr.hpp"

namespace modeswitch {

/// Bounds |f(x)| <= c0 + c1 |x| and |f(x) - f(y)| <= lipschitz |x - y|,
/// available for expressions of growth degree <= 1.
struct LinearGrowthBound {
  double c0 = 0.0;
  double c1 = 0.0;
  double lipschitz = 0.0;
};

inline std::optional<LinearGrowthBound> linear_growth_bound(const Expr& e) {
  struct Entry {
    bool constant;
    double value;
    LinearGrowthBound bound;
  };
  std::vector<std::optional<Entry>> st;
  using Op = Expr::Op;
  for (const auto& n : e.nodes()) {
    switch (n.op) {
      case Op::Const:
        st.push_back(Entry{true, n.value, {std::abs(n.value), 0.0, 0.0}});
        break;
      case Op::Var:
        st.push_back(Entry{false, 0.0, {0.0, 1.0, 1.0}});
        break;
      case Op::Abs:
      case Op::Neg:
        if (st.back() && st.back()->constant) {
          auto& t = *st.back();
          t.value = n.op == Op::Abs ? std::abs(t.value) : -t.value;
          t.bound.c0 = std::abs(t.value);
        }
        break;
      case Op::Pow: {
        auto& t = st.back();
        if (!t) break;
        if (t->constant || n.exponent == 0) {
          double acc = 1.0;
          for (unsigned k = 0; k < n.exponent; ++k) acc *= t->value;
          t = Entry{true, acc, {std::abs(acc), 0.0, 0.0}};
        } else if (n.exponent != 1) {
          t.reset();
        }
        break;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul: {
        auto r = st.back();
        st.pop_back();
        auto& l = st.back();
        if (!l || !r) {
          l.reset();
          break;
        }
        if (l->constant && r->constant) {
          const double v = n.op == Op::Add   ? l->value + r->value
                           : n.op == Op::Sub ? l->value - r->value
                                             : l->value * r->value;
          l = Entry{true, v, {std::abs(v), 0.0, 0.0}};
        } else if (n.op == Op::Mul) {
          if (!l->constant && !r->constant) {
            l.reset();
            break;
          }
          const double k = std::abs(l->constant ? l->value : r->value);
          const auto& b = l->constant ? r->bound : l->bound;
          l = Entry{false, 0.0, {k * b.c0, k * b.c1, k * b.lipschitz}};
        } else {
          l = Entry{false, 0.0,
                    {l->bound.c0 + r->bound.c0, l->bound.c1 + r->bound.c1,
                     l->bound.lipschitz + r->bound.lipschitz}};
        }
        break;
      }
    }
  }
  if (!st.back()) return std::nullopt;
  return st.back()->bound;
}

/// One-dimensional diffusion dX = b(X) dt + sigma(X) dW.
struct DiffusionModel {
  Expr drift;
  Expr volatility;

  double b(double x) const { return drift.evaluate(x); }
  double sigma(double x) const { return volatility.evaluate(x); }

  /// Lipschitz with linear growth, checked syntactically.
  bool is_affine() const { return drift.growth_degree() <= 1 && volatility.growth_degree() <= 1; }

  /// b(x) = b1 x and sigma(x) = s1 x exactly.
  bool is_purely_linear() const {
    const auto fb = drift.affine_form();
    const auto fs = volatility.affine_form();
    return fb && fs && fb->constant == 0.0 && fs->constant == 0.0;
  }
  double linear_drift() const { return drift.affine_form().value().slope; }
  double linear_volatility() const { return volatility.affine_form().value().slope; }
};

/// Exponent C_q in E|X_t|^q <= C_q e^{C_q t} (1 + |x|^q).
inline double moment_exponent(const DiffusionModel& model, int q) {
  if (q < 2) throw std::invalid_argument("moment exponent requires q >= 2");
  if (!model.is_affine()) throw std::invalid_argument("moment exponent requires affine coefficients");
  const double qd = q;
  if (model.is_purely_linear()) {
    const double b1 = model.linear_drift();
    const double s1 = model.linear_volatility();
    return qd * b1 + qd * (qd - 1.0) * s1 * s1 / 2.0;
  }
  const auto bb = linear_growth_bound(model.drift).value();
  const auto bs = linear_growth_bound(model.volatility).value();
  const double c = std::max({bb.c0, bb.c1, bb.lipschitz, bs.c0, bs.c1, bs.lipschitz});
  return qd * c + qd * (qd - 1.0) * c * c / 2.0;
}

/// Infinite-horizon m-mode switching problem. Modes are 0-based here.
class SwitchingProblem {
 public:
  /// `cost[i][j]` is the cost of switching from mode i to j; diagonal entries
  /// are ignored. Pass gamma <= 0 to use the default growth exponent.
  SwitchingProblem(double r, std::vector<Expr> psi, std::vector<std::vector<Expr>> cost,
                   DiffusionModel model, int gamma = 0)
      : r_(r), psi_(std::move(psi)), cost_(std::move(cost)), model_(std::move(model)) {
    if (!(r_ > 0.0) || !std::isfinite(r_)) throw std::invalid_argument("discount rate must be positive");
    if (psi_.empty()) throw std::invalid_argument("at least one mode is required");
    if (cost_.size() != psi_.size()) throw std::invalid_argument("cost matrix must be m x m");
    for (const auto& row : cost_) {
      if (row.size() != psi_.size()) throw std::invalid_argument("cost matrix must be m x m");
    }
    gamma_ = gamma > 0 ? gamma : default_gamma();
    if (gamma_ < 2) throw std::invalid_argument("growth exponent gamma must be >= 2");
  }

  int modes() const { return static_cast<int>(psi_.size()); }
  double r() const { return r_; }
  int gamma() const { return gamma_; }
  const DiffusionModel& model() const { return model_; }
  const Expr& psi(int i) const { return psi_.at(i); }
  const Expr& cost(int i, int j) const {
    if (i == j) throw std::invalid_argument("switching cost g_ii is undefined");
    return cost_.at(i).at(j);
  }

  /// max(2, max_i deg psi_i).
  int default_gamma() const {
    unsigned d = 2;
    for (const auto& p : psi_) d = std::max(d, p.growth_degree());
    return static_cast<int>(d);
  }

 private:
  double r_;
  std::vector<Expr> psi_;
  std::vector<std::vector<Expr>> cost_;
  DiffusionModel model_;
  int gamma_ = 2;
};

inline double psi_value(const SwitchingProblem& p, int i, double x) { return p.psi(i).evaluate(x); }

inline double cost_value(const SwitchingProblem& p, int i, int j, double x) {
  return p.cost(i, j).evaluate(x);
}

struct ValidationReport {
  bool h1_ok = false;
  bool h2_ok = false;
  bool h3_ok = false;
  bool h4_ok = false;
  std::map<int, double> moment_exponents;
  double cost_min = std::numeric_limits<double>::infinity();
  double cost_max = -std::numeric_limits<double>::infinity();
  std::vector<std::string> messages;

  bool ok() const { return h1_ok && h2_ok && h3_ok && h4_ok; }
};

/// Checks the standing assumptions over [x_lo, x_hi]. Failures are reported,
/// not thrown.
inline ValidationReport validate(const SwitchingProblem& problem, double x_lo, double x_hi,
                                 int samples = 10001) {
  if (!(x_lo < x_hi)) throw std::invalid_argument("validation domain must satisfy x_lo < x_hi");
  ValidationReport rep;
  const auto& model = problem.model();

  rep.h1_ok = model.is_affine();
  if (rep.h1_ok) {
    rep.messages.push_back("H1: drift and volatility are affine (Lipschitz, linear growth)");
  } else {
    rep.messages.push_back("H1: FAILED, drift or volatility has growth degree > 1");
  }

  const int m = problem.modes();
  if (m == 1) {
    rep.h2_ok = true;
    rep.messages.push_back("H2: single mode, no switching costs");
  } else {
    samples = std::max(samples, 2);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        if (i == j) continue;
        const Expr& g = problem.cost(i, j);
        for (int k = 0; k < samples; ++k) {
          const double x = x_lo + (x_hi - x_lo) * k / (samples - 1);
          const double v = g.evaluate(x);
          rep.cost_min = std::min(rep.cost_min, v);
          rep.cost_max = std::max(rep.cost_max, v);
        }
        if (g.growth_degree() > 0) {
          std::ostringstream os;
          os << "H2: warning, g_" << i + 1 << j + 1
             << " is unbounded in x; upper bound only holds on the truncated domain";
          rep.messages.push_back(os.str());
        }
      }
    }
    rep.h2_ok = rep.cost_min > 0.0;
    std::ostringstream os;
    os << "H2: " << (rep.h2_ok ? "ok" : "FAILED") << ", sampled costs in [" << rep.cost_min << ", "
       << rep.cost_max << "]";
    rep.messages.push_back(os.str());
  }

  unsigned deg = 0;
  for (int i = 0; i < m; ++i) deg = std::max(deg, problem.psi(i).growth_degree());
  rep.h3_ok = static_cast<unsigned>(problem.gamma()) >= deg;
  {
    std::ostringstream os;
    os << "H3: " << (rep.h3_ok ? "ok" : "FAILED") << ", gamma = " << problem.gamma()
       << ", max profit degree = " << deg;
    rep.messages.push_back(os.str());
  }

  if (rep.h1_ok) {
    for (int q = 2; q <= std::max(2, problem.gamma()); ++q) {
      rep.moment_exponents[q] = moment_exponent(model, q);
    }
    const double cg = rep.moment_exponents.at(problem.gamma());
    rep.h4_ok = -problem.r() + cg < 0.0;
    std::ostringstream os;
    os << "H4: " << (rep.h4_ok ? "ok" : "FAILED") << ", C_gamma = " << cg << ", r = " << problem.r();
    rep.messages.push_back(os.str());
  } else {
    rep.h4_ok = false;
    rep.messages.push_back("H4: FAILED, moment constants unavailable without H1");
  }
  return rep;
}

}  // namespace modeswitch
