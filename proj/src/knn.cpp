#include "knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tiltshift::detail {

namespace {

struct Candidate {
  double dist2;
  int index;
  bool operator<(const Candidate& o) const {
    return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
  }
};

// Keeps the k best candidates in `best` (a max-heap on Candidate ordering).
void offer(std::vector<Candidate>& best, std::size_t k, Candidate c) {
  if (best.size() < k) {
    best.push_back(c);
    std::push_heap(best.begin(), best.end());
  } else if (c < best.front()) {
    std::pop_heap(best.begin(), best.end());
    best.back() = c;
    std::push_heap(best.begin(), best.end());
  }
}

std::vector<int> finish(std::vector<Candidate>& best) {
  std::sort(best.begin(), best.end());
  std::vector<int> out;
  out.reserve(best.size());
  for (const auto& c : best) out.push_back(c.index);
  return out;
}

}  // namespace

NeighborIndex::NeighborIndex(std::span<const Vec3> points) : points_(points) {
  if (points_.size() < kBruteForceLimit) return;

  // First pass: cell size from the bounding box assuming a surface-like cloud.
  Vec3 lo = points_.front();
  Vec3 hi = points_.front();
  for (const auto& p : points_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 extent = hi - lo;
  const double area = std::max({extent.x() * extent.y(), extent.y() * extent.z(),
                                extent.x() * extent.z(), 1e-18});
  origin_ = lo;
  build_grid(std::max(std::sqrt(area / static_cast<double>(points_.size())) * 2.0, 1e-9));

  // Second pass: median nearest-neighbour distance over a fixed sample.
  const std::size_t samples = std::min<std::size_t>(1000, points_.size());
  const std::size_t step = points_.size() / samples;
  std::vector<double> nn;
  nn.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto idx = static_cast<int>(i * step);
    const auto neighbours = nearest(idx, 1);
    if (!neighbours.empty()) nn.push_back((points_[neighbours[0]] - points_[idx]).norm());
  }
  std::nth_element(nn.begin(), nn.begin() + nn.size() / 2, nn.end());
  const double median = nn.empty() ? 0.0 : nn[nn.size() / 2];
  if (median > 0.0) build_grid(2.0 * median);
}

void NeighborIndex::build_grid(double cell) {
  cell_ = cell;
  cells_.clear();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cells_[key_of(points_[i])].push_back(static_cast<int>(i));
  }
}

NeighborIndex::CellKey NeighborIndex::pack(std::int64_t x, std::int64_t y, std::int64_t z) {
  constexpr std::int64_t kBias = 1 << 20;
  constexpr std::uint64_t kMask = (1u << 21) - 1;
  return (static_cast<std::uint64_t>(x + kBias) & kMask) |
         ((static_cast<std::uint64_t>(y + kBias) & kMask) << 21) |
         ((static_cast<std::uint64_t>(z + kBias) & kMask) << 42);
}

NeighborIndex::CellKey NeighborIndex::key_of(const Vec3& p) const {
  const Vec3 q = (p - origin_) / cell_;
  return pack(static_cast<std::int64_t>(std::floor(q.x())),
              static_cast<std::int64_t>(std::floor(q.y())),
              static_cast<std::int64_t>(std::floor(q.z())));
}

std::vector<int> NeighborIndex::nearest(int query, int k) const {
  const auto want = static_cast<std::size_t>(std::max(k, 0));
  std::vector<Candidate> best;
  best.reserve(want + 1);
  const Vec3& q = points_[query];

  if (cells_.empty()) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (static_cast<int>(i) == query) continue;
      offer(best, want, {(points_[i] - q).squaredNorm(), static_cast<int>(i)});
    }
    return finish(best);
  }

  const Vec3 cq = (q - origin_) / cell_;
  const std::int64_t cx = static_cast<std::int64_t>(std::floor(cq.x()));
  const std::int64_t cy = static_cast<std::int64_t>(std::floor(cq.y()));
  const std::int64_t cz = static_cast<std::int64_t>(std::floor(cq.z()));
  const std::size_t total = points_.size() - 1;
  std::size_t visited = 0;

  for (std::int64_t r = 0;; ++r) {
    for (std::int64_t dx = -r; dx <= r; ++dx) {
      for (std::int64_t dy = -r; dy <= r; ++dy) {
        for (std::int64_t dz = -r; dz <= r; ++dz) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
          const auto it = cells_.find(pack(cx + dx, cy + dy, cz + dz));
          if (it == cells_.end()) continue;
          for (int i : it->second) {
            if (i == query) continue;
            ++visited;
            offer(best, want, {(points_[i] - q).squaredNorm(), i});
          }
        }
      }
    }
    // Every unvisited point lies at least r cells away from the query.
    const double reach = static_cast<double>(r) * cell_;
    if (best.size() == want && best.front().dist2 < reach * reach) break;
    if (visited >= total) break;
  }
  return finish(best);
}

}  // namespace tiltshift::detail
