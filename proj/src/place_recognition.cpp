#include "sonarfleet/place_recognition.hpp"

#include <algorithm>
#include <cmath>

#include "sonarfleet/errors.hpp"

namespace sonarfleet {

SceneDescriptor make_descriptor(const PointCloud2D& cloud, double max_range) {
    SceneDescriptor d;
    d.bin_width = max_range / 16.0;
    for (const Point2& p : cloud.points) {
        const double r = std::hypot(p.x, p.y);
        if (r >= max_range) continue;
        const int k = static_cast<int>(r / d.bin_width);
        if (k < 0 || k > 15) continue;
        if (d.bins[k] < 255) ++d.bins[k];
    }
    return d;
}

double descriptor_distance(const SceneDescriptor& a, const SceneDescriptor& b) {
    double s = 0.0;
    for (int i = 0; i < 16; ++i) {
        const double diff = static_cast<double>(a.bins[i]) - static_cast<double>(b.bins[i]);
        s += diff * diff;
    }
    return std::sqrt(s);
}

struct DescriptorTree::Node {
    std::array<std::uint8_t, 16> point;
    std::int64_t id;
    int axis;
    std::unique_ptr<Node> left, right;
};

DescriptorTree::DescriptorTree() = default;
DescriptorTree::~DescriptorTree() = default;
DescriptorTree::DescriptorTree(DescriptorTree&&) noexcept = default;
DescriptorTree& DescriptorTree::operator=(DescriptorTree&&) noexcept = default;

std::size_t DescriptorTree::size() const { return size_; }

void DescriptorTree::insert(std::int64_t id, const SceneDescriptor& d) {
    std::unique_ptr<Node>* slot = &root_;
    int depth = 0;
    while (*slot) {
        Node& n = **slot;
        slot = d.bins[n.axis] <= n.point[n.axis] ? &n.left : &n.right;
        ++depth;
    }
    auto node = std::make_unique<Node>();
    node->point = d.bins;
    node->id = id;
    node->axis = depth % 16;
    *slot = std::move(node);
    ++size_;
}

namespace {

double sq_dist(const std::array<std::uint8_t, 16>& a, const std::array<std::uint8_t, 16>& b) {
    double s = 0.0;
    for (int i = 0; i < 16; ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += diff * diff;
    }
    return s;
}

struct Hit {
    double sq;
    std::int64_t id;
    bool operator<(const Hit& o) const { return sq < o.sq || (sq == o.sq && id < o.id); }
};

}  // namespace

std::vector<DescriptorMatch> DescriptorTree::query(const SceneDescriptor& d, double max_dist,
                                                   int k) const {
    std::vector<DescriptorMatch> out;
    if (k <= 0 || !root_) return out;

    // Bounded best-k search; `best` kept sorted by (distance, id).
    struct Searcher {
        const std::array<std::uint8_t, 16>& q;
        double max_sq;
        std::size_t k;
        std::vector<Hit>& best;

        void run(const Node* n) {
            if (!n) return;
            const double dsq = sq_dist(n->point, q);
            if (dsq <= max_sq) {
                Hit h{dsq, n->id};
                auto it = std::lower_bound(best.begin(), best.end(), h);
                if (best.size() < k || it != best.end()) {
                    best.insert(it, h);
                    if (best.size() > k) best.pop_back();
                }
            }
            const double delta =
                static_cast<double>(q[n->axis]) - static_cast<double>(n->point[n->axis]);
            const Node* near_side = delta <= 0 ? n->left.get() : n->right.get();
            const Node* far_side = delta <= 0 ? n->right.get() : n->left.get();
            run(near_side);
            // prune the far side against the worst still-admissible distance
            double bound = max_sq;
            if (best.size() == k) bound = std::min(bound, best.back().sq);
            if (delta * delta <= bound) run(far_side);
        }
    };

    std::vector<Hit> best;
    best.reserve(static_cast<std::size_t>(k) + 1);
    Searcher s{d.bins, max_dist * max_dist, static_cast<std::size_t>(k), best};
    s.run(root_.get());
    out.reserve(best.size());
    for (const Hit& h : best) out.push_back(DescriptorMatch{h.id, std::sqrt(h.sq)});
    return out;
}

std::size_t SceneImage::set_count() const {
    std::size_t n = 0;
    for (std::uint8_t c : grid) n += (c != 0);
    return n;
}

SceneImage make_scene_image(const PointCloud2D& cloud, double cell, double max_range) {
    SceneImage img;
    img.cell = cell;
    img.n = static_cast<int>(std::ceil(2.0 * max_range / cell));
    img.grid.assign(static_cast<std::size_t>(img.n) * img.n, 0);
    for (const Point2& p : cloud.points) {
        const int i = static_cast<int>(std::floor((p.x + max_range) / cell));
        const int j = static_cast<int>(std::floor((p.y + max_range) / cell));
        if (i < 0 || i >= img.n || j < 0 || j >= img.n) continue;
        img.grid[static_cast<std::size_t>(i) * img.n + j] = 1;
    }
    return img;
}

double scene_sad(const SceneImage& a, const SceneImage& b) {
    if (a.n != b.n || a.grid.size() != b.grid.size())
        throw ShapeMismatchError("scene_sad: grid shapes differ");
    std::size_t diff = 0, mass = 0;
    for (std::size_t i = 0; i < a.grid.size(); ++i) {
        const bool sa = a.grid[i] != 0, sb = b.grid[i] != 0;
        diff += (sa != sb);
        mass += sa + sb;
    }
    return static_cast<double>(diff) / static_cast<double>(std::max<std::size_t>(mass, 1));
}

}  // namespace sonarfleet
