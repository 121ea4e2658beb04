#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sonarfleet/geometry.hpp"
#include "sonarfleet/pcm.hpp"

namespace sonarfleet {

enum class FactorKind : std::uint8_t { Prior, Odom, Ssm, Nssm, InterRobot, PartnerRobot };

const char* factor_kind_name(FactorKind k);

// Gaussian relative-pose constraint (absolute for Prior).
struct Factor {
    FactorKind kind = FactorKind::Odom;
    KfKey a;                      // sole endpoint for Prior
    KfKey b;
    Transform2 measurement;
    Mat3 covariance = Mat3::Identity();

    bool binary() const { return kind != FactorKind::Prior; }
};

struct KeyframePolicy {
    double min_translation = 2.0;           // meters
    double min_rotation = 30.0 * M_PI / 180.0;  // radians
};

// True when the dead-reckoning delta since the last keyframe warrants a new one.
bool maybe_add_keyframe(const Transform2& dead_reckoning_delta, const KeyframePolicy& policy);

struct OptimizeOptions {
    int max_iterations = 100;
    double rel_tol = 1e-9;  // relative chi2 change
};

struct OptimizeResult {
    std::vector<double> chi2_sequence;  // accepted values, starting at the initial chi2
    int iterations = 0;
    bool converged = false;
    std::vector<KfKey> untouched;  // keys outside the prior's connected component
};

struct PoseDelta {
    KfKey key;
    Pose2 pose;
};

// Per-robot factor graph over SE(2) poses. Single writer; optimization runs to
// completion before further mutation.
class GraphState {
public:
    explicit GraphState(int own_robot = 0) : own_robot_(own_robot) {}

    int own_robot() const { return own_robot_; }
    const std::map<KfKey, Pose2>& poses() const { return poses_; }
    const std::vector<Factor>& factors() const { return factors_; }

    bool has_pose(const KfKey& k) const { return poses_.count(k) != 0; }
    const Pose2& pose(const KfKey& k) const { return poses_.at(k); }
    void set_pose(const KfKey& k, const Pose2& p) { poses_[k] = p; }

    // Appends a factor. Unknown endpoints are initialized by chaining the
    // known endpoint through the measurement; a factor whose endpoints are all
    // unknown is rejected. Duplicate (kind + endpoints + measurement) factors
    // raise DuplicateFactorError. Returns the factor index.
    std::size_t add_factor(const Factor& f);

    // Replaces the measurement of an existing factor (pose re-send updates).
    void update_measurement(std::size_t index, const Transform2& measurement,
                            const Mat3& covariance);

    OptimizeResult optimize(const OptimizeOptions& opts = {});

    double chi2() const;

    void write_g2o(const std::string& path) const;

private:
    int own_robot_;
    std::map<KfKey, Pose2> poses_;
    std::vector<Factor> factors_;
    std::set<std::uint64_t> factor_hashes_;
};

// Whitened-free residual of one factor given poses: log(inv(z) * between(a, b))
// for binary factors, log(inv(z) * pose) for the prior. Theta wrapped.
Vec3 factor_residual(const Factor& f, const std::map<KfKey, Pose2>& poses);

// Analytic Jacobians of the residual with respect to (x, y, theta) of each
// endpoint. For the prior only `da` is filled.
void factor_jacobians(const Factor& f, const std::map<KfKey, Pose2>& poses, Mat3& da, Mat3& db);

// Keys whose pose moved at least threshold_t in translation or threshold_r in
// rotation between the two states.
std::vector<PoseDelta> changed_poses(const std::map<KfKey, Pose2>& before,
                                     const std::map<KfKey, Pose2>& after, double threshold_t,
                                     double threshold_r);

}  // namespace sonarfleet
