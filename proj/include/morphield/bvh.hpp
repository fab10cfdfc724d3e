#pragma once

#include "morphield/types.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace morphield {

// Static bounding-volume hierarchy over arbitrary primitives given by their
// boxes. Immutable after construction; queries are safe from any thread.
class Bvh {
 public:
  static constexpr std::uint32_t kNone = ~std::uint32_t{0};

  Bvh() = default;
  explicit Bvh(std::span<const Aabb> boxes, std::uint32_t leaf_size = 4);

  bool empty() const { return nodes_.empty(); }
  std::size_t primitive_count() const { return order_.size(); }
  const Aabb& bounds() const { return nodes_.front().box; }

  // Closest primitive to q under `distance_sq(primitive, q)`, which must be
  // >= the box distance of the primitive. Returns (kNone, inf) when nothing
  // lies within max_distance_sq.
  template <class DistanceSq>
  std::pair<std::uint32_t, double> nearest(const Vec3& q, DistanceSq&& distance_sq,
                                           double max_distance_sq = std::numeric_limits<double>::infinity()) const;

 private:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: offset into order_; inner: left child
    std::uint32_t count = 0;  // leaf: primitive count; inner: 0
    std::uint32_t right = 0;  // inner: right child
  };

  std::uint32_t build(std::span<const Aabb> boxes, std::vector<Vec3>& centroids, std::uint32_t begin,
                      std::uint32_t end, std::uint32_t leaf_size);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

template <class DistanceSq>
std::pair<std::uint32_t, double> Bvh::nearest(const Vec3& q, DistanceSq&& distance_sq, double max_distance_sq) const {
  std::pair<std::uint32_t, double> best{kNone, max_distance_sq};
  if (nodes_.empty()) return best;

  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.distance_sq(q) > best.second) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t prim = order_[i];
        const double d = distance_sq(prim, q);
        if (d < best.second || (d == best.second && prim < best.first)) best = {prim, d};
      }
      continue;
    }
    // Visit the nearer child first.
    const double dl = nodes_[node.first].box.distance_sq(q);
    const double dr = nodes_[node.right].box.distance_sq(q);
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.first;
    } else {
      stack[top++] = node.first;
      stack[top++] = node.right;
    }
  }
  return best;
}

}  // namespace morphield
