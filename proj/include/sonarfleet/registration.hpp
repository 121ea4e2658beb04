#pragma once

#include <memory>
#include <vector>

#include "sonarfleet/geometry.hpp"

namespace sonarfleet {

struct RegistrationResult {
    Transform2 transform;   // maps source-frame points into the target frame
    double rmse = 0.0;      // residual over the final matched pairs, meters
    int iterations = 0;
    bool converged = false;
    std::size_t matches = 0;
    // Matched-pair objective before/after each transform update, for
    // monotonicity checks: post[i] <= pre[i] holds per iteration.
    std::vector<double> objective_pre;
    std::vector<double> objective_post;
};

struct IcpParams {
    int max_iter = 50;
    double match_radius = 2.0;   // meters, association gate
    double tol = 1e-6;           // transform delta convergence threshold
};

struct GlobalRegParams {
    int n_starts = 64;           // uniformly spaced rotations in [-pi, pi)
    int coarse_iters = 10;       // short ICP per start
    double trim_fraction = 0.7;  // best fraction of matches scored
    IcpParams icp;
};

// Exact truncated nearest neighbors in 2D via a uniform grid; ties go to the
// lower point index. Built once per target cloud and reused across queries.
class NnGrid {
public:
    NnGrid(const std::vector<Point2>& points, double radius);
    // Index of the nearest point within the radius, or -1. sq_out gets the
    // squared distance when found.
    int nearest(const Point2& q, double* sq_out = nullptr) const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

// Point-to-point ICP with truncated association and a closed-form 2D
// least-squares alignment step. Throws DegenerateError when fewer than three
// pairs match.
RegistrationResult icp(const PointCloud2D& source, const PointCloud2D& target,
                       const Transform2& init, const IcpParams& p = {});

// Initialization-free registration: both clouds are centered on their
// centroids, a fixed lattice of rotations is scored with trimmed RMSE after a
// short ICP, and the best start is refined by full ICP. Deterministic: the
// reduction is min by score with ties to the lower start index, so the
// parallel and serial versions agree bit for bit.
RegistrationResult global_register(const PointCloud2D& source, const PointCloud2D& target,
                                   const GlobalRegParams& p = {});
RegistrationResult global_register_serial(const PointCloud2D& source, const PointCloud2D& target,
                                          const GlobalRegParams& p = {});

// Fraction of transformed source points whose nearest target neighbor lies
// within `radius` (0.5 m unless stated otherwise).
double overlap(const PointCloud2D& source, const PointCloud2D& target, const Transform2& t,
               double radius = 0.5);
double overlap_serial(const PointCloud2D& source, const PointCloud2D& target, const Transform2& t,
                      double radius = 0.5);

}  // namespace sonarfleet
