#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonarfleet/geometry.hpp"

namespace sonarfleet {

// Polar intensity image, range-major: cell (bin, beam) at bin * n_beams + beam.
struct PolarImage {
    int n_range_bins = 0;
    int n_beams = 0;
    double range_resolution = 0.0;            // meters per range bin
    std::vector<double> bearings;             // per-beam bearing, radians
    std::vector<double> intensities;          // n_range_bins * n_beams, >= 0

    double at(int bin, int beam) const { return intensities[static_cast<std::size_t>(bin) * n_beams + beam]; }
    double& at(int bin, int beam) { return intensities[static_cast<std::size_t>(bin) * n_beams + beam]; }
    double max_range() const { return n_range_bins * range_resolution; }
};

// Beam bearings spanning [-fov/2, +fov/2] inclusive, linspace convention.
std::vector<double> fan_bearings(double fov_rad, int n_beams);

struct CfarParams {
    int train_cells = 8;
    int guard_cells = 2;
    double pfa = 1e-4;
};

// Detection mask, same shape and indexing as the image it came from.
struct DetectionMask {
    int n_range_bins = 0;
    int n_beams = 0;
    std::vector<std::uint8_t> cells;

    bool at(int bin, int beam) const { return cells[static_cast<std::size_t>(bin) * n_beams + beam] != 0; }
    std::size_t count() const;
    bool operator==(const DetectionMask& o) const = default;
};

// Cell-averaging CFAR along the range dimension of each beam. A cell fires when
// its intensity exceeds alpha * mean(training cells), alpha = N(pfa^(-1/N)-1)
// with N = 2*train_cells; cells near the array ends fall back to the one-sided
// training window. Throws WindowError when the window does not fit.
DetectionMask cfar_detect(const PolarImage& img, const CfarParams& p);
DetectionMask cfar_detect_serial(const PolarImage& img, const CfarParams& p);

double cfar_alpha(const CfarParams& p);

// Flagged cells to metric points: r = (bin + 0.5) * resolution, in-plane.
PointCloud2D mask_to_cloud(const DetectionMask& mask, const PolarImage& img);

// Voxel downsampling keeping each voxel's medoid (the member minimizing the
// summed distance to the others; ties go to the lowest input index). Output is
// ordered by ascending (i, j) voxel index.
PointCloud2D downsample_medoid(const PointCloud2D& cloud, double voxel);

// Debug dump of a mask as a binary PGM.
void write_mask_pgm(const DetectionMask& mask, const std::string& path);

}  // namespace sonarfleet
