#include "sonarfleet/gating.hpp"

#include <algorithm>

namespace sonarfleet {

const char* gate_reason_name(GateReason r) {
    switch (r) {
        case GateReason::Pass: return "pass";
        case GateReason::MinPoints: return "min_points";
        case GateReason::Ratio: return "ratio";
        case GateReason::Sad: return "sad";
        case GateReason::Overlap: return "overlap";
    }
    return "?";
}

GateResult gate_pre(const PointCloud2D& src_cloud, const PointCloud2D& dst_cloud,
                    const SceneImage& src_img, const SceneImage& dst_img, const GateConfig& cfg) {
    const std::size_t a = src_cloud.size(), b = dst_cloud.size();
    if (a < cfg.min_points || b < cfg.min_points) return {false, GateReason::MinPoints};
    const double ratio =
        static_cast<double>(std::max(a, b)) / static_cast<double>(std::max<std::size_t>(std::min(a, b), 1));
    if (ratio > cfg.max_ratio) return {false, GateReason::Ratio};
    if (cfg.use_scene_image && scene_sad(src_img, dst_img) > cfg.max_sad)
        return {false, GateReason::Sad};
    return {true, GateReason::Pass};
}

GateResult gate_post(const RegistrationResult& result, double ovl, const GateConfig& cfg) {
    (void)result;
    if (ovl >= cfg.min_overlap) return {true, GateReason::Pass};
    return {false, GateReason::Overlap};
}

}  // namespace sonarfleet
