#include "sonarfleet/sonar_frontend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <utility>

#include "sonarfleet/errors.hpp"

namespace sonarfleet {

std::vector<double> fan_bearings(double fov_rad, int n_beams) {
    std::vector<double> b(n_beams);
    if (n_beams == 1) {
        b[0] = 0.0;
        return b;
    }
    const double start = -fov_rad / 2.0;
    const double step = fov_rad / (n_beams - 1);
    for (int i = 0; i < n_beams; ++i) b[i] = start + i * step;
    return b;
}

std::size_t DetectionMask::count() const {
    std::size_t n = 0;
    for (std::uint8_t c : cells) n += (c != 0);
    return n;
}

double cfar_alpha(const CfarParams& p) {
    const double n = 2.0 * p.train_cells;
    return n * (std::pow(p.pfa, -1.0 / n) - 1.0);
}

namespace {

void check_window(const PolarImage& img, const CfarParams& p) {
    if (p.train_cells < 1) throw WindowError("cfar: train_cells must be >= 1");
    if (p.guard_cells < 0) throw WindowError("cfar: guard_cells must be >= 0");
    if (p.pfa <= 0.0 || p.pfa >= 1.0) throw WindowError("cfar: pfa must be in (0,1)");
    const int window = 2 * (p.train_cells + p.guard_cells) + 1;
    if (window > img.n_range_bins) throw WindowError("cfar: window exceeds n_range_bins");
}

// One beam: prefix sums over the range profile give O(1) training sums.
void cfar_beam(const PolarImage& img, const CfarParams& p, double alpha, int beam,
               std::uint8_t* out_col_base) {
    const int n = img.n_range_bins;
    const int g = p.guard_cells, t = p.train_cells;
    std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
    for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + img.at(i, beam);
    auto range_sum = [&](int lo, int hi) {  // [lo, hi), clipped
        lo = std::max(lo, 0);
        hi = std::min(hi, n);
        return hi > lo ? std::make_pair(prefix[hi] - prefix[lo], hi - lo) : std::make_pair(0.0, 0);
    };
    for (int i = 0; i < n; ++i) {
        auto [lead_sum, lead_n] = range_sum(i - g - t, i - g);
        auto [lag_sum, lag_n] = range_sum(i + g + 1, i + g + t + 1);
        const int used = lead_n + lag_n;
        if (used == 0) continue;
        const double mean = (lead_sum + lag_sum) / used;
        if (img.at(i, beam) > alpha * mean) out_col_base[static_cast<std::size_t>(i) * img.n_beams] = 1;
    }
}

}  // namespace

DetectionMask cfar_detect_serial(const PolarImage& img, const CfarParams& p) {
    check_window(img, p);
    DetectionMask mask;
    mask.n_range_bins = img.n_range_bins;
    mask.n_beams = img.n_beams;
    mask.cells.assign(img.intensities.size(), 0);
    const double alpha = cfar_alpha(p);
    for (int beam = 0; beam < img.n_beams; ++beam) {
        cfar_beam(img, p, alpha, beam, mask.cells.data() + beam);
    }
    return mask;
}

DetectionMask cfar_detect(const PolarImage& img, const CfarParams& p) {
    check_window(img, p);
    DetectionMask mask;
    mask.n_range_bins = img.n_range_bins;
    mask.n_beams = img.n_beams;
    mask.cells.assign(img.intensities.size(), 0);
    const double alpha = cfar_alpha(p);
#pragma omp parallel for schedule(static)
    for (int beam = 0; beam < img.n_beams; ++beam) {
        cfar_beam(img, p, alpha, beam, mask.cells.data() + beam);
    }
    return mask;
}

PointCloud2D mask_to_cloud(const DetectionMask& mask, const PolarImage& img) {
    if (mask.n_range_bins != img.n_range_bins || mask.n_beams != img.n_beams)
        throw ShapeMismatchError("mask_to_cloud: mask shape does not match image");
    PointCloud2D cloud;
    for (int bin = 0; bin < mask.n_range_bins; ++bin) {
        for (int beam = 0; beam < mask.n_beams; ++beam) {
            if (!mask.at(bin, beam)) continue;
            SonarReturn ret;
            ret.range = (bin + 0.5) * img.range_resolution;
            ret.bearing = img.bearings[beam];
            const XYZ c = polar_to_cartesian(ret);
            cloud.points.push_back(Point2{c.x, c.y});
        }
    }
    return cloud;
}

PointCloud2D downsample_medoid(const PointCloud2D& cloud, double voxel) {
    PointCloud2D out;
    out.frame = cloud.frame;
    if (cloud.empty()) return out;

    std::map<std::pair<long, long>, std::vector<std::size_t>> buckets;
    for (std::size_t k = 0; k < cloud.points.size(); ++k) {
        const Point2& p = cloud.points[k];
        buckets[{static_cast<long>(std::floor(p.x / voxel)),
                 static_cast<long>(std::floor(p.y / voxel))}].push_back(k);
    }
    out.points.reserve(buckets.size());
    for (const auto& [key, members] : buckets) {
        (void)key;
        if (members.size() == 1) {
            out.points.push_back(cloud.points[members[0]]);
            continue;
        }
        std::size_t best = members[0];
        double best_sum = std::numeric_limits<double>::infinity();
        for (std::size_t m : members) {
            double sum = 0.0;
            for (std::size_t o : members) {
                const double dx = cloud.points[m].x - cloud.points[o].x;
                const double dy = cloud.points[m].y - cloud.points[o].y;
                sum += std::sqrt(dx * dx + dy * dy);
            }
            if (sum < best_sum) {  // strict <: ties keep the lowest index
                best_sum = sum;
                best = m;
            }
        }
        out.points.push_back(cloud.points[best]);
    }
    return out;
}

void write_mask_pgm(const DetectionMask& mask, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    f << "P5\n" << mask.n_beams << " " << mask.n_range_bins << "\n255\n";
    for (std::uint8_t c : mask.cells) f.put(c ? static_cast<char>(255) : 0);
}

}  // namespace sonarfleet
