#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "sonarfleet/geometry.hpp"

namespace sonarfleet {

// Rotation-invariant range histogram: 16 saturating 8-bit counts, 128 bits on
// the wire.
struct SceneDescriptor {
    std::array<std::uint8_t, 16> bins{};
    double bin_width = 0.0;  // meters, max_range / 16

    bool operator==(const SceneDescriptor& o) const { return bins == o.bins; }
};

SceneDescriptor make_descriptor(const PointCloud2D& cloud, double max_range);

double descriptor_distance(const SceneDescriptor& a, const SceneDescriptor& b);

constexpr int kDescriptorBits = 128;

struct DescriptorMatch {
    std::int64_t id;
    double distance;
};

// Exact k-d tree over the 16-dimensional count vectors. Single writer, and
// queries are not run concurrently with inserts.
class DescriptorTree {
public:
    DescriptorTree();
    ~DescriptorTree();
    DescriptorTree(DescriptorTree&&) noexcept;
    DescriptorTree& operator=(DescriptorTree&&) noexcept;

    void insert(std::int64_t id, const SceneDescriptor& d);
    // Up to k nearest neighbors within max_dist, ordered by (distance, id).
    std::vector<DescriptorMatch> query(const SceneDescriptor& d, double max_dist, int k) const;
    std::size_t size() const;

private:
    struct Node;
    std::unique_ptr<Node> root_;
    std::size_t size_ = 0;
};

// Coarse binary occupancy raster of a cloud, anchored at (-max_range, -max_range).
struct SceneImage {
    int n = 0;          // cells per side
    double cell = 0.0;  // meters
    std::vector<std::uint8_t> grid;

    bool operator==(const SceneImage& o) const = default;
    std::size_t set_count() const;
};

SceneImage make_scene_image(const PointCloud2D& cloud, double cell, double max_range);

// Normalized sum of absolute differences over set cells: 0 identical, 1 disjoint.
double scene_sad(const SceneImage& a, const SceneImage& b);

}  // namespace sonarfleet
