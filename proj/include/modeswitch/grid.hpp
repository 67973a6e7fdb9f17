#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace modeswitch {

enum class Spacing { Uniform, Logarithmic };

/// Truncated one-dimensional state grid with strictly increasing nodes.
class Grid {
 public:
  Grid() = default;

  double x_min() const { return nodes_.front(); }
  double x_max() const { return nodes_.back(); }
  std::size_t size() const { return nodes_.size(); }
  Spacing spacing() const { return spacing_; }
  double operator[](std::size_t k) const { return nodes_[k]; }
  std::span<const double> nodes() const { return nodes_; }

  /// Index of the node closest to x (lower index on an exact midpoint);
  /// x outside the hull maps to the nearest endpoint.
  std::size_t nearest_index(double x) const {
    if (!(x > nodes_.front())) return 0;
    if (x >= nodes_.back()) return nodes_.size() - 1;
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - nodes_.begin());
    const std::size_t lo = hi - 1;
    return (x - nodes_[lo]) <= (nodes_[hi] - x) ? lo : hi;
  }

  bool contains(double x) const { return x >= nodes_.front() && x <= nodes_.back(); }

  /// Piecewise-linear interpolation of nodal samples.
  double interpolate(std::span<const double> values, double x) const {
    if (values.size() != nodes_.size()) throw std::invalid_argument("interpolate: size mismatch");
    if (!contains(x)) throw std::out_of_range("interpolate: point outside the grid");
    if (x == nodes_.back()) return values.back();
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - nodes_.begin());
    const std::size_t lo = hi - 1;
    const double w = (x - nodes_[lo]) / (nodes_[hi] - nodes_[lo]);
    return (1.0 - w) * values[lo] + w * values[hi];
  }

  friend Grid build_grid(double x_min, double x_max, std::size_t n_nodes, Spacing spacing);

 private:
  std::vector<double> nodes_;
  Spacing spacing_ = Spacing::Uniform;
};

inline Grid build_grid(double x_min, double x_max, std::size_t n_nodes, Spacing spacing = Spacing::Uniform) {
  if (!(x_min < x_max) || !std::isfinite(x_min) || !std::isfinite(x_max)) {
    throw std::invalid_argument("grid requires finite x_min < x_max");
  }
  if (n_nodes < 3) throw std::invalid_argument("grid requires at least 3 nodes");
  if (spacing == Spacing::Logarithmic && !(x_min > 0.0)) {
    throw std::invalid_argument("logarithmic grid requires x_min > 0");
  }
  Grid g;
  g.spacing_ = spacing;
  g.nodes_.resize(n_nodes);
  const double last = static_cast<double>(n_nodes - 1);
  if (spacing == Spacing::Uniform) {
    const double h = (x_max - x_min) / last;
    for (std::size_t k = 0; k < n_nodes; ++k) g.nodes_[k] = x_min + h * static_cast<double>(k);
  } else {
    const double l0 = std::log(x_min);
    const double dl = (std::log(x_max) - l0) / last;
    for (std::size_t k = 0; k < n_nodes; ++k) g.nodes_[k] = std::exp(l0 + dl * static_cast<double>(k));
  }
  g.nodes_.front() = x_min;
  g.nodes_.back() = x_max;
  for (std::size_t k = 1; k < n_nodes; ++k) {
    if (!(g.nodes_[k] > g.nodes_[k - 1])) throw std::invalid_argument("grid nodes are not strictly increasing");
  }
  return g;
}

}  // namespace modeswitch
