#pragma once

#include <string>

#include "sonarfleet/geometry.hpp"
#include "sonarfleet/place_recognition.hpp"
#include "sonarfleet/registration.hpp"

namespace sonarfleet {

struct GateConfig {
    std::size_t min_points = 75;
    double max_ratio = 2.0;
    double max_sad = 0.8;
    double min_overlap = 0.55;
    double pcm_threshold = 11.34;  // chi-square, 3 dof, 0.99
    bool use_scene_image = true;   // ablation switch
};

enum class GateReason { Pass, MinPoints, Ratio, Sad, Overlap };

struct GateResult {
    bool pass = false;
    GateReason reason = GateReason::Pass;
};

const char* gate_reason_name(GateReason r);

// Pre-registration gates: point count, point ratio, scene-image SAD.
// All thresholds are inclusive on the passing side.
GateResult gate_pre(const PointCloud2D& src_cloud, const PointCloud2D& dst_cloud,
                    const SceneImage& src_img, const SceneImage& dst_img, const GateConfig& cfg);

// Post-registration overlap gate.
GateResult gate_post(const RegistrationResult& result, double ovl, const GateConfig& cfg);

}  // namespace sonarfleet
