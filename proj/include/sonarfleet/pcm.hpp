#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sonarfleet/geometry.hpp"

namespace sonarfleet {

struct KfKey {
    int robot = 0;
    std::int64_t kf = 0;

    auto operator<=>(const KfKey&) const = default;
};

// Relative pose with its covariance, as used for the consistency cycle.
struct OdomEdge {
    Transform2 relative;
    Mat3 covariance = Mat3::Identity();
};

// One verified-or-pending loop closure between two robots' keyframes.
struct LoopCandidate {
    KfKey src;
    KfKey dst;
    Transform2 relative;  // pose of dst keyframe in the src keyframe frame
    Mat3 covariance = Mat3::Identity();
    double overlap = 0.0;
    double rmse = 0.0;
};

// Looks up the estimated relative pose (and covariance) along one robot's
// trajectory between two of its keyframes.
using OdomLookup = std::function<OdomEdge(int robot, std::int64_t kf_a, std::int64_t kf_b)>;

// Mahalanobis distance of the cycle residual formed by two loop closures and
// the odometry chains between their endpoints. Symmetric by construction: the
// pair is canonicalized before the cycle is traversed. Throws NonSpdError on a
// non-positive-definite summed covariance.
double pairwise_consistency(const LoopCandidate& l1, const LoopCandidate& l2,
                            const OdomEdge& odo_a, const OdomEdge& odo_b);

// Full pairwise distance matrix; entry (i, j) for i < j, mirrored. The
// parallel and serial fills are bit-identical.
std::vector<double> consistency_matrix(const std::vector<LoopCandidate>& cands,
                                       const OdomLookup& odom);
std::vector<double> consistency_matrix_serial(const std::vector<LoopCandidate>& cands,
                                              const OdomLookup& odom);

// Indices of the maximum pairwise-consistent subset: edges where the distance
// is <= threshold, exact Bron-Kerbosch maximum clique, ties broken by lower
// total Mahalanobis sum then lexicographic indices. Output sorted ascending.
std::vector<std::size_t> pcm_select(const std::vector<LoopCandidate>& cands,
                                    const OdomLookup& odom, double threshold);

// Same selection on a precomputed distance matrix.
std::vector<std::size_t> pcm_select_matrix(const std::vector<double>& dist, std::size_t n,
                                           double threshold);

}  // namespace sonarfleet
