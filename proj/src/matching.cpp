#include "msdetr/matching.hpp"

#include <algorithm>
#include <limits>

#include "msdetr/errors.hpp"

namespace msdetr {

namespace {

// Shortest augmenting path Hungarian method for n <= m; returns, per row, its
// assigned column.
std::vector<int> hungarian_rows(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

MatchResult solve_assignment(const Mat& cost) {
  MatchResult r;
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) {
    for (int q = 0; q < rows; ++q) r.unmatched.push_back(q);
    return r;
  }
  if (!cost.allFinite()) throw InputError("assignment cost matrix has non-finite entries");
  std::vector<int> gt_of_query(rows, -1);
  if (rows <= cols) {
    gt_of_query = hungarian_rows(cost);
  } else {
    const std::vector<int> query_of_gt = hungarian_rows(cost.transpose());
    for (int gtc = 0; gtc < cols; ++gtc) gt_of_query[query_of_gt[gtc]] = gtc;
  }
  for (int q = 0; q < rows; ++q) {
    if (gt_of_query[q] >= 0)
      r.assignment.emplace_back(q, gt_of_query[q]);
    else
      r.unmatched.push_back(q);
  }
  return r;
}

}  // namespace msdetr
