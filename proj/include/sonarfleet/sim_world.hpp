#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sonarfleet/geometry.hpp"
#include "sonarfleet/sonar_frontend.hpp"

namespace sonarfleet {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a * 0x9e3779b97f4a7c15ULL + b;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

struct Wall {
    Point2 a, b;
    double reflectivity = 1.0;  // in (0, 1]
};

struct Scatterer {
    Point2 center;
    double radius = 0.3;
    double reflectivity = 1.0;
};

struct World {
    std::uint64_t seed = 0;
    double extent = 80.0;  // bounding half-plane size, meters
    std::vector<Wall> walls;
    std::vector<Scatterer> scatterers;

    std::size_t n_features() const { return walls.size() + scatterers.size(); }
};

// Deterministic pseudo-random world: a mix of wall segments and point
// scatterers inside the extent box.
World generate_world(std::uint64_t seed, int n_features, double extent);

struct SonarParams {
    double max_range = 30.0;
    double fov = 130.0 * M_PI / 180.0;
    int n_beams = 256;
    int n_range_bins = 200;
    double min_range = 0.5;
    double noise_sigma = 1.0;     // Rayleigh background scale
    double hit_gain = 40.0;       // intensity scale of a reflection
    double speckle_sigma = 0.2;   // multiplicative Gaussian on hits
    int pulse_bins = 2;           // radial extent of one return

    double range_resolution() const { return max_range / n_range_bins; }
};

// First-hit distance of a world ray, or a negative value when nothing is hit
// within max_range. Exposed for test oracles.
double raycast(const World& world, const Point2& origin, double direction, double max_range,
               double* reflect_out = nullptr);

// Ray-cast sonar fan with Rayleigh background noise and speckled returns.
// Deterministic given (world.seed, scan_index); the pose affects geometry only.
PolarImage simulate_scan(const World& world, const Pose2& pose, const SonarParams& sp,
                         std::uint64_t scan_index);

struct MotionNoise {
    double sigma_x = 0.0;
    double sigma_y = 0.0;
    double sigma_theta = 0.0;
};

struct RobotMotionState {
    Pose2 true_pose;
    Pose2 dead_reckoning;
};

// One motion step: truth and dead reckoning integrate the same control with
// independent noise draws, so odometry drifts away from truth.
RobotMotionState step_robot(const RobotMotionState& prev, const Transform2& u,
                            const MotionNoise& noise, std::mt19937_64& rng_true,
                            std::mt19937_64& rng_dr);

}  // namespace sonarfleet
