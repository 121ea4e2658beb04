#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace sonarfleet {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Wrap an angle to [-pi, pi).
inline double wrap_angle(double a) {
    const double two_pi = 2.0 * M_PI;
    double w = a - two_pi * std::floor((a + M_PI) / two_pi);
    // floor rounding can land exactly on +pi; fold it back
    if (w >= M_PI) w -= two_pi;
    if (w < -M_PI) w += two_pi;
    return w;
}

// Planar robot pose (x, y, heading). Heading is kept wrapped to [-pi, pi).
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Pose2() = default;
    Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}

    static Pose2 identity() { return Pose2(); }

    bool operator==(const Pose2& o) const { return x == o.x && y == o.y && theta == o.theta; }
};

// A relative rigid transform has the same parameterization as a pose.
using Transform2 = Pose2;

inline Pose2 compose(const Pose2& a, const Pose2& b) {
    const double c = std::cos(a.theta), s = std::sin(a.theta);
    return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta);
}

inline Pose2 inverse(const Pose2& p) {
    const double c = std::cos(p.theta), s = std::sin(p.theta);
    return Pose2(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.theta);
}

// Pose of b expressed in the frame of a: inverse(a) * b.
inline Pose2 between(const Pose2& a, const Pose2& b) { return compose(inverse(a), b); }

// Minimal coordinates of a pose/transform: translation plus wrapped angle.
inline Vec3 to_vec(const Pose2& p) { return Vec3(p.x, p.y, wrap_angle(p.theta)); }
inline Pose2 from_vec(const Vec3& v) { return Pose2(v[0], v[1], v[2]); }

// One sonar return in spherical sensor coordinates.
struct SonarReturn {
    double range = 0.0;      // meters, >= 0
    double bearing = 0.0;    // radians in [-pi, pi)
    double elevation = 0.0;  // radians; 0 after in-plane projection
    double intensity = 0.0;  // non-negative
};

struct XYZ {
    double x, y, z;
};

inline XYZ polar_to_cartesian(const SonarReturn& r) {
    const double cp = std::cos(r.elevation);
    return XYZ{r.range * cp * std::cos(r.bearing), r.range * cp * std::sin(r.bearing),
               r.range * std::sin(r.elevation)};
}

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

// Extracted sonar contacts in meters, expressed in the frame of one keyframe.
struct PointCloud2D {
    std::vector<Point2> points;
    std::int64_t frame = -1;  // keyframe id, -1 when not yet attached

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

inline PointCloud2D transform_cloud(const Pose2& pose, const PointCloud2D& cloud) {
    PointCloud2D out;
    out.frame = cloud.frame;
    out.points.reserve(cloud.points.size());
    const double c = std::cos(pose.theta), s = std::sin(pose.theta);
    for (const Point2& p : cloud.points) {
        out.points.push_back(Point2{pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y});
    }
    return out;
}

}  // namespace sonarfleet
