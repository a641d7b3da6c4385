#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "tiltshift/geometry.hpp"

namespace tiltshift::detail {

/// Exact k-nearest-neighbour queries over a fixed point set. Small sets are
/// searched exhaustively; larger ones go through a uniform hash grid whose
/// cell size is twice the median nearest-neighbour distance. Ties are broken
/// by point index so results are deterministic.
class NeighborIndex {
 public:
  static constexpr std::size_t kBruteForceLimit = 20000;

  explicit NeighborIndex(std::span<const Vec3> points);

  /// Indices of the k nearest points to points[query], excluding query itself,
  /// sorted by increasing distance.
  std::vector<int> nearest(int query, int k) const;

  bool uses_grid() const { return !cells_.empty(); }
  double cell_size() const { return cell_; }

 private:
  using CellKey = std::uint64_t;

  CellKey key_of(const Vec3& p) const;
  static CellKey pack(std::int64_t x, std::int64_t y, std::int64_t z);
  void build_grid(double cell);

  std::span<const Vec3> points_;
  double cell_ = 0.0;
  Vec3 origin_ = Vec3::Zero();
  std::unordered_map<CellKey, std::vector<int>> cells_;
};

}  // namespace tiltshift::detail
