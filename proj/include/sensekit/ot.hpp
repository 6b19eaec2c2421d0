#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "sensekit/errors.hpp"

namespace sensekit::ot {

/// Transport cost matrix with row/column marginals. Entries are finite;
/// marginals are non-negative weight vectors (normalized to sum 1 when built
/// from chunk weights).
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> entries;  // row-major, rows*cols
  std::vector<double> row_marginal;
  std::vector<double> col_marginal;

  double at(std::size_t i, std::size_t j) const { return entries[i * cols + j]; }

  void validate() const {
    if (rows == 0 || cols == 0 || entries.size() != rows * cols ||
        row_marginal.size() != rows || col_marginal.size() != cols)
      throw ArgumentError("cost matrix: inconsistent dimensions");
    for (double e : entries)
      if (!std::isfinite(e)) throw ArgumentError("cost matrix: non-finite entry");
    double sa = 0.0, sb = 0.0;
    for (double a : row_marginal) {
      if (!(a >= 0.0)) throw ArgumentError("cost matrix: negative row marginal");
      sa += a;
    }
    for (double b : col_marginal) {
      if (!(b >= 0.0)) throw ArgumentError("cost matrix: negative col marginal");
      sb += b;
    }
    if (std::abs(sa - sb) > 1e-6)
      throw ArgumentError("cost matrix: marginal sums differ by more than 1e-6");
  }
};

namespace detail {

// Exact transportation simplex (basis = spanning tree of the bipartite
// supply/demand graph). Dantzig pivoting with a Bland fallback during
// degenerate streaks, which is the standard anti-cycling arrangement.
class TransportSimplex {
 public:
  TransportSimplex(std::size_t m, std::size_t n, const double* cost,
                   std::vector<double> supply, std::vector<double> demand)
      : m_(m), n_(n), cost_(cost), supply_(std::move(supply)),
        demand_(std::move(demand)) {}

  double solve() {
    northwest_corner();
    double max_abs_cost = 0.0;
    for (std::size_t k = 0; k < m_ * n_; ++k)
      max_abs_cost = std::max(max_abs_cost, std::abs(cost_[k]));
    const double tol = 1e-12 * (1.0 + max_abs_cost);

    const std::size_t max_iters = 2000 + 60 * m_ * n_ * (m_ + n_);
    std::size_t degenerate_streak = 0;
    bool bland = false;
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
      compute_duals();
      std::size_t ei = 0, ej = 0;
      if (!find_entering(tol, bland, ei, ej)) return total_cost();
      const double theta = pivot(ei, ej);
      if (theta <= tol) {
        if (++degenerate_streak > m_ + n_ + 4) bland = true;
      } else {
        degenerate_streak = 0;
        bland = false;
      }
    }
    throw Error("transport solver failed to converge");
  }

 private:
  struct Cell {
    std::size_t i, j;
    double flow;
  };

  void northwest_corner() {
    basis_.clear();
    basis_.reserve(m_ + n_ - 1);
    std::vector<double> a = supply_, b = demand_;
    std::size_t i = 0, j = 0;
    while (true) {
      const double f = std::min(a[i], b[j]);
      basis_.push_back({i, j, f});
      a[i] -= f;
      b[j] -= f;
      if (i + 1 == m_ && j + 1 == n_) break;
      if (i + 1 == m_) { ++j; continue; }
      if (j + 1 == n_) { ++i; continue; }
      if (a[i] <= b[j]) ++i; else ++j;
    }
  }

  // Duals from the basis tree; u[0] anchored at 0.
  void compute_duals() {
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    std::vector<char> known_u(m_, 0), known_v(n_, 0);
    known_u[0] = 1;
    std::size_t remaining = basis_.size();
    std::vector<char> used(basis_.size(), 0);
    while (remaining > 0) {
      bool progress = false;
      for (std::size_t k = 0; k < basis_.size(); ++k) {
        if (used[k]) continue;
        const auto& cell = basis_[k];
        const double c = cost_[cell.i * n_ + cell.j];
        if (known_u[cell.i]) {
          v_[cell.j] = c - u_[cell.i];
          known_v[cell.j] = 1;
        } else if (known_v[cell.j]) {
          u_[cell.i] = c - v_[cell.j];
          known_u[cell.i] = 1;
        } else {
          continue;
        }
        used[k] = 1;
        --remaining;
        progress = true;
      }
      if (!progress) throw Error("transport solver: disconnected basis");
    }
  }

  bool find_entering(double tol, bool bland, std::size_t& ei, std::size_t& ej) const {
    double best = -tol;
    bool found = false;
    for (std::size_t i = 0; i < m_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const double rc = cost_[i * n_ + j] - u_[i] - v_[j];
        if (rc < -tol) {
          if (bland) { ei = i; ej = j; return true; }
          if (rc < best) { best = rc; ei = i; ej = j; found = true; }
        }
      }
    }
    return found;
  }

  // Adds the entering cell, shifts flow around the unique basis cycle, and
  // drops the blocking cell. Returns the shifted amount.
  double pivot(std::size_t ei, std::size_t ej) {
    // Path between row node ei and column node ej through the basis tree.
    const std::size_t nodes = m_ + n_;
    std::vector<std::vector<std::size_t>> adj(nodes);
    for (std::size_t k = 0; k < basis_.size(); ++k) {
      adj[basis_[k].i].push_back(k);
      adj[m_ + basis_[k].j].push_back(k);
    }
    std::vector<std::size_t> parent_edge(nodes, SIZE_MAX);
    std::vector<std::size_t> parent_node(nodes, SIZE_MAX);
    std::vector<char> visited(nodes, 0);
    std::vector<std::size_t> stack{ei};
    visited[ei] = 1;
    const std::size_t goal = m_ + ej;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      if (node == goal) break;
      for (std::size_t k : adj[node]) {
        const std::size_t other =
            (node < m_) ? m_ + basis_[k].j : basis_[k].i;
        if (!visited[other]) {
          visited[other] = 1;
          parent_edge[other] = k;
          parent_node[other] = node;
          stack.push_back(other);
        }
      }
    }
    if (!visited[goal]) throw Error("transport solver: broken basis tree");

    std::vector<std::size_t> path;  // basis indices from ej side back to ei
    for (std::size_t node = goal; node != ei; node = parent_node[node])
      path.push_back(parent_edge[node]);
    std::reverse(path.begin(), path.end());  // now ordered from ei to ej

    // Cycle signs: entering +, then alternating - / + along the path.
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leaving = SIZE_MAX;
    for (std::size_t p = 0; p < path.size(); ++p) {
      if (p % 2 == 0) {  // minus position
        const auto& cell = basis_[path[p]];
        if (cell.flow < theta ||
            (cell.flow == theta && leaving != SIZE_MAX &&
             cell_key(path[p]) < cell_key(leaving))) {
          theta = cell.flow;
          leaving = path[p];
        }
      }
    }
    for (std::size_t p = 0; p < path.size(); ++p) {
      basis_[path[p]].flow += (p % 2 == 0) ? -theta : theta;
      if (basis_[path[p]].flow < 0.0) basis_[path[p]].flow = 0.0;
    }
    basis_[leaving] = {ei, ej, theta};
    return theta;
  }

  std::size_t cell_key(std::size_t k) const {
    return basis_[k].i * n_ + basis_[k].j;
  }

  double total_cost() const {
    std::vector<std::size_t> order(basis_.size());
    for (std::size_t k = 0; k < basis_.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return cell_key(a) < cell_key(b); });
    double total = 0.0;
    for (std::size_t k : order)
      total += basis_[k].flow * cost_[basis_[k].i * n_ + basis_[k].j];
    return total;
  }

  std::size_t m_, n_;
  const double* cost_;
  std::vector<double> supply_, demand_;
  std::vector<Cell> basis_;
  std::vector<double> u_, v_;
};

inline int lex_compare(const std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    if (a[i] < b[i]) return -1;
    if (a[i] > b[i]) return 1;
  }
  return 0;
}

}  // namespace detail

/// Exact minimum of <T, C> over transport plans T with the given marginals.
/// The problem is solved in a canonical orientation (transposing when rows >
/// cols, with a lexicographic tie-break on square instances) so that
/// ot_cost(C; a, b) == ot_cost(C^T; b, a) holds bit-exactly.
inline double ot_cost(const CostMatrix& c) {
  c.validate();

  bool transpose = c.rows > c.cols;
  if (c.rows == c.cols) {
    int cmp = detail::lex_compare(c.row_marginal, c.col_marginal);
    if (cmp == 0) {
      // Compare entries against the transpose, row-major.
      for (std::size_t i = 0; i < c.rows && cmp == 0; ++i) {
        for (std::size_t j = 0; j < c.cols && cmp == 0; ++j) {
          const double x = c.at(i, j), y = c.at(j, i);
          if (x < y) cmp = -1;
          else if (x > y) cmp = 1;
        }
      }
    }
    transpose = cmp > 0;
  }

  std::size_t m = c.rows, n = c.cols;
  std::vector<double> cost;
  std::vector<double> supply, demand;
  if (!transpose) {
    cost.assign(c.entries.begin(), c.entries.end());
    supply = c.row_marginal;
    demand = c.col_marginal;
  } else {
    m = c.cols;
    n = c.rows;
    cost.resize(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = c.at(j, i);
    supply = c.col_marginal;
    demand = c.row_marginal;
  }

  // Rebalance the (<= 1e-6) marginal slack onto the demand side so the
  // simplex sees an exactly balanced instance.
  double sa = 0.0, sb = 0.0;
  for (double a : supply) sa += a;
  for (double b : demand) sb += b;
  if (sa == 0.0) return 0.0;
  if (sb != sa) {
    const double scale = sa / sb;
    for (double& b : demand) b *= scale;
  }

  detail::TransportSimplex simplex(m, n, cost.data(), std::move(supply),
                                   std::move(demand));
  return simplex.solve();
}

}  // namespace sensekit::ot
