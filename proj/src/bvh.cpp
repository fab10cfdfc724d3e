#include "morphield/bvh.hpp"

#include <algorithm>
#include <numeric>

namespace morphield {

Bvh::Bvh(std::span<const Aabb> boxes, std::uint32_t leaf_size) {
  if (boxes.empty()) return;
  order_.resize(boxes.size());
  std::iota(order_.begin(), order_.end(), 0u);
  std::vector<Vec3> centroids(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) centroids[i] = boxes[i].center();
  nodes_.reserve(2 * boxes.size() / std::max<std::uint32_t>(leaf_size, 1) + 1);
  build(boxes, centroids, 0, static_cast<std::uint32_t>(boxes.size()), std::max<std::uint32_t>(leaf_size, 1));
}

std::uint32_t Bvh::build(std::span<const Aabb> boxes, std::vector<Vec3>& centroids, std::uint32_t begin,
                         std::uint32_t end, std::uint32_t leaf_size) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb box, centroid_box;
  for (std::uint32_t i = begin; i < end; ++i) {
    box.extend(boxes[order_[i]]);
    centroid_box.extend(centroids[order_[i]]);
  }
  nodes_[index].box = box;

  if (end - begin <= leaf_size) {
    nodes_[index].first = begin;
    nodes_[index].count = end - begin;
    return index;
  }

  int axis = 0;
  centroid_box.extent().maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (centroids[a][axis] != centroids[b][axis]) return centroids[a][axis] < centroids[b][axis];
                     return a < b;
                   });

  const std::uint32_t left = build(boxes, centroids, begin, mid, leaf_size);
  const std::uint32_t right = build(boxes, centroids, mid, end, leaf_size);
  nodes_[index].first = left;
  nodes_[index].right = right;
  nodes_[index].count = 0;
  return index;
}

}  // namespace morphield
