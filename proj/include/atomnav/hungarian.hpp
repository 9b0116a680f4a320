#pragma once

// O(n^3) Hungarian algorithm (potentials formulation) for minimum-cost
// assignment on square matrices, plus a rectangular wrapper with a
// forbidden-pair cost used by structure association.

#include <limits>
#include <utility>
#include <vector>

#include "atomnav/errors.hpp"

namespace atomnav {

constexpr double kAssignForbidden = 1e7;

/// Minimum-cost perfect assignment of a square cost matrix.
/// Returns row -> column.
inline std::vector<int> hungarian_square(
    const std::vector<std::vector<double>>& cost) {
  const int n = int(cost.size());
  if (n == 0) return {};
  for (const auto& row : cost)
    if (int(row.size()) != n) throw Error("hungarian: matrix not square");

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(std::size_t(n) + 1, 0.0), v(std::size_t(n) + 1, 0.0);
  std::vector<int> p(std::size_t(n) + 1, 0), way(std::size_t(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(std::size_t(n) + 1, inf);
    std::vector<char> used(std::size_t(n) + 1, 0);
    do {
      used[std::size_t(j0)] = 1;
      const int i0 = p[std::size_t(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[std::size_t(j)]) continue;
        const double cur =
            cost[std::size_t(i0) - 1][std::size_t(j) - 1] - u[std::size_t(i0)] -
            v[std::size_t(j)];
        if (cur < minv[std::size_t(j)]) {
          minv[std::size_t(j)] = cur;
          way[std::size_t(j)] = j0;
        }
        if (minv[std::size_t(j)] < delta) {
          delta = minv[std::size_t(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[std::size_t(j)]) {
          u[std::size_t(p[std::size_t(j)])] += delta;
          v[std::size_t(j)] -= delta;
        } else {
          minv[std::size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[std::size_t(j0)] != 0);
    do {
      const int j1 = way[std::size_t(j0)];
      p[std::size_t(j0)] = p[std::size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(std::size_t(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[std::size_t(j)] > 0) row_to_col[std::size_t(p[std::size_t(j)]) - 1] = j - 1;
  return row_to_col;
}

/// Rectangular assignment with forbidden pairs. Pads to square with
/// kAssignForbidden and drops matches that land on forbidden or padded
/// cells. Returns (row, col) pairs of accepted matches.
inline std::vector<std::pair<int, int>> solve_assignment(
    const std::vector<std::vector<double>>& cost, int rows, int cols) {
  if (rows == 0 || cols == 0) return {};
  const int n = std::max(rows, cols);
  std::vector<std::vector<double>> sq(
      std::size_t(n), std::vector<double>(std::size_t(n), kAssignForbidden));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) sq[std::size_t(r)][std::size_t(c)] = cost[std::size_t(r)][std::size_t(c)];
  const auto row_to_col = hungarian_square(sq);
  std::vector<std::pair<int, int>> matches;
  for (int r = 0; r < rows; ++r) {
    const int c = row_to_col[std::size_t(r)];
    if (c >= 0 && c < cols &&
        cost[std::size_t(r)][std::size_t(c)] < kAssignForbidden)
      matches.emplace_back(r, c);
  }
  return matches;
}

}  // namespace atomnav
