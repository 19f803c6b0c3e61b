#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "wbench/linalg.hpp"

namespace wbench::testing {

// Gaussian elimination with partial pivoting; false when (numerically) singular.
inline bool solve_dense(std::vector<std::vector<double>> a, std::vector<double> b, std::vector<double>& x) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    if (std::abs(a[p][c]) < 1e-12) return false;
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  x.resize(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return true;
}

// Minimum over all basic feasible solutions: every choice of n + m - 1 cells
// whose marginal equations (one dropped as redundant) have a unique,
// nonnegative solution.
inline double vertex_enumeration(const std::vector<double>& p, const std::vector<double>& q, const linalg::Matrix& cost) {
  const std::size_t n = p.size(), m = q.size(), cells = n * m, k = n + m - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<char> pick(cells, 0);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(k), 1);
  std::vector<double> rhs(p);
  rhs.insert(rhs.end(), q.begin(), q.end() - 1);
  do {
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < cells; ++c)
      if (pick[c]) chosen.push_back(c);
    std::vector<std::vector<double>> a(k, std::vector<double>(k, 0.0));
    for (std::size_t v = 0; v < k; ++v) {
      const std::size_t i = chosen[v] / m, j = chosen[v] % m;
      a[i][v] = 1.0;
      if (j < m - 1) a[n + j][v] = 1.0;
    }
    std::vector<double> x;
    if (!solve_dense(a, rhs, x)) continue;
    if (std::any_of(x.begin(), x.end(), [](double v) { return v < -1e-12; })) continue;
    double c = 0.0;
    for (std::size_t v = 0; v < k; ++v) c += x[v] * cost(chosen[v] / m, chosen[v] % m);
    best = std::min(best, c);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace wbench::testing
