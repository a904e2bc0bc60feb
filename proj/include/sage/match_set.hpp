#pragma once

#include "sage/types.hpp"

#include <utility>
#include <vector>

namespace sage {

// 2D feature correspondences between a source and a target frame.
// Locations are pixel coordinates (integer grid positions stored as doubles).
struct MatchSet {
  std::vector<std::pair<Vec2, Vec2>> pairs;  // (x_src, x_tgt)
  int candidate_count = 0;                   // matches produced before 3D filtering

  int size() const { return static_cast<int>(pairs.size()); }
  bool empty() const { return pairs.empty(); }
};

}  // namespace sage
