#include "sonarfleet/sim_world.hpp"

#include <algorithm>
#include <cmath>

namespace sonarfleet {

World generate_world(std::uint64_t seed, int n_features, double extent) {
    World w;
    w.seed = seed;
    w.extent = extent;
    std::mt19937_64 rng(mix_seed(seed, 0x77726c64ULL));
    std::uniform_real_distribution<double> coord(-extent / 2.0, extent / 2.0);
    std::uniform_real_distribution<double> reflect(0.5, 1.0);
    std::uniform_real_distribution<double> len(2.0, 10.0);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    std::uniform_real_distribution<double> kind(0.0, 1.0);
    for (int i = 0; i < n_features; ++i) {
        if (kind(rng) < 0.4) {
            Wall wall;
            wall.a = Point2{coord(rng), coord(rng)};
            const double l = len(rng), th = ang(rng);
            wall.b = Point2{std::clamp(wall.a.x + l * std::cos(th), -extent / 2.0, extent / 2.0),
                            std::clamp(wall.a.y + l * std::sin(th), -extent / 2.0, extent / 2.0)};
            wall.reflectivity = reflect(rng);
            w.walls.push_back(wall);
        } else {
            Scatterer s;
            s.center = Point2{coord(rng), coord(rng)};
            s.radius = 0.3;
            s.reflectivity = reflect(rng);
            w.scatterers.push_back(s);
        }
    }
    return w;
}

namespace {

// ray (o + t*d, t>0) against segment [a,b]; returns t or -1
double ray_segment(const Point2& o, double dx, double dy, const Point2& a, const Point2& b) {
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double den = dx * ey - dy * ex;
    if (std::abs(den) < 1e-12) return -1.0;
    const double ox = a.x - o.x, oy = a.y - o.y;
    const double t = (ox * ey - oy * ex) / den;
    const double s = (ox * dy - oy * dx) / den;
    if (t > 0.0 && s >= 0.0 && s <= 1.0) return t;
    return -1.0;
}

// ray against circle; returns the distance to the near rim or -1
double ray_circle(const Point2& o, double dx, double dy, const Point2& c, double r) {
    const double fx = o.x - c.x, fy = o.y - c.y;
    const double b = fx * dx + fy * dy;
    const double cc = fx * fx + fy * fy - r * r;
    const double disc = b * b - cc;
    if (disc < 0.0) return -1.0;
    const double t = -b - std::sqrt(disc);
    return t > 0.0 ? t : -1.0;
}

}  // namespace

double raycast(const World& world, const Point2& origin, double direction, double max_range,
               double* reflect_out) {
    const double dx = std::cos(direction), dy = std::sin(direction);
    double best = -1.0;
    double best_reflect = 0.0;
    for (const Wall& w : world.walls) {
        const double t = ray_segment(origin, dx, dy, w.a, w.b);
        if (t > 0.0 && t <= max_range && (best < 0.0 || t < best)) {
            best = t;
            best_reflect = w.reflectivity;
        }
    }
    for (const Scatterer& s : world.scatterers) {
        const double t = ray_circle(origin, dx, dy, s.center, s.radius);
        if (t > 0.0 && t <= max_range && (best < 0.0 || t < best)) {
            best = t;
            best_reflect = s.reflectivity;
        }
    }
    if (best > 0.0 && reflect_out) *reflect_out = best_reflect;
    return best;
}

PolarImage simulate_scan(const World& world, const Pose2& pose, const SonarParams& sp,
                         std::uint64_t scan_index) {
    PolarImage img;
    img.n_range_bins = sp.n_range_bins;
    img.n_beams = sp.n_beams;
    img.range_resolution = sp.range_resolution();
    img.bearings = fan_bearings(sp.fov, sp.n_beams);
    img.intensities.assign(static_cast<std::size_t>(sp.n_range_bins) * sp.n_beams, 0.0);

    std::mt19937_64 rng(mix_seed(world.seed, scan_index));
    std::uniform_real_distribution<double> uni(1e-12, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Rayleigh background everywhere
    for (double& v : img.intensities) v = sp.noise_sigma * std::sqrt(-2.0 * std::log(uni(rng)));

    const Point2 origin{pose.x, pose.y};
    for (int beam = 0; beam < sp.n_beams; ++beam) {
        double reflect = 0.0;
        const double range =
            raycast(world, origin, pose.theta + img.bearings[beam], sp.max_range, &reflect);
        // one speckle draw per beam keeps the RNG stream independent of hits
        const double speckle = gauss(rng);
        if (range < sp.min_range || range >= sp.max_range) continue;
        const int bin = static_cast<int>(range / img.range_resolution);
        if (bin < 0 || bin >= sp.n_range_bins) continue;
        const double signal =
            std::max(0.0, reflect * sp.hit_gain * (1.0 + sp.speckle_sigma * speckle));
        for (int b = bin; b < std::min(bin + sp.pulse_bins, sp.n_range_bins); ++b)
            img.at(b, beam) = std::max(img.at(b, beam), signal);
    }
    return img;
}

RobotMotionState step_robot(const RobotMotionState& prev, const Transform2& u,
                            const MotionNoise& noise, std::mt19937_64& rng_true,
                            std::mt19937_64& rng_dr) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto noisy = [&](std::mt19937_64& rng) {
        const double nx = noise.sigma_x > 0.0 ? noise.sigma_x * gauss(rng) : 0.0;
        const double ny = noise.sigma_y > 0.0 ? noise.sigma_y * gauss(rng) : 0.0;
        const double nt = noise.sigma_theta > 0.0 ? noise.sigma_theta * gauss(rng) : 0.0;
        return compose(u, Transform2(nx, ny, nt));
    };
    RobotMotionState next;
    next.true_pose = compose(prev.true_pose, noisy(rng_true));
    next.dead_reckoning = compose(prev.dead_reckoning, noisy(rng_dr));
    return next;
}

}  // namespace sonarfleet
