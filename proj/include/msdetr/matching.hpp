#pragma once

#include <utility>
#include <vector>

#include "msdetr/params.hpp"

namespace msdetr {

struct MatchResult {
  std::vector<std::pair<int, int>> assignment;  // (query, gt), sorted by query
  std::vector<int> unmatched;                   // query indices without a gt
};

/// Minimum-cost assignment on a rectangular cost matrix (rows = queries,
/// cols = ground truths); min(rows, cols) pairs, injective on both sides.
/// Throws InputError when a cost is not finite.
MatchResult solve_assignment(const Mat& cost);

}  // namespace msdetr
