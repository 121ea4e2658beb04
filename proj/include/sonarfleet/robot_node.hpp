#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sonarfleet/cloud_codec.hpp"
#include "sonarfleet/comms.hpp"
#include "sonarfleet/gating.hpp"
#include "sonarfleet/pcm.hpp"
#include "sonarfleet/place_recognition.hpp"
#include "sonarfleet/pose_graph.hpp"
#include "sonarfleet/registration.hpp"
#include "sonarfleet/sonar_frontend.hpp"

namespace sonarfleet {

struct NodeConfig {
    CfarParams cfar;
    double frontend_voxel = 0.3;
    double compression_voxel = 0.25;
    double sonar_max_range = 30.0;

    KeyframePolicy keyframe;
    Mat3 odom_covariance = (Vec3(0.05 * 0.05, 0.05 * 0.05,
                                 (M_PI / 180.0) * (M_PI / 180.0))).asDiagonal();
    double prior_sigma = 1e-3;

    double scene_cell = 1.0;
    double tree_max_dist = 40.0;
    int tree_k = 3;
    int nssm_min_gap = 10;
    int nssm_candidates = 2;

    IcpParams icp;
    GlobalRegParams global_reg;
    double ssm_max_rmse = 0.5;
    double overlap_radius = 0.5;

    // registration covariance model: sigma = max(rmse, floor) * scale
    double reg_sigma_floor = 0.05;
    double reg_sigma_scale_xy = 1.0;
    double reg_sigma_scale_theta = 0.5;

    // fixed partner-robot factor noise
    double pr_sigma_xy = 0.1;
    double pr_sigma_theta = 2.0 * M_PI / 180.0;

    GateConfig gates;
    bool use_pcm = true;           // inter-robot PCM (ablation cases 1-2 disable)
    bool use_compression = false;  // case 4
    bool resend_enabled = true;    // off in case 5
    double resend_translation = 0.5;
    double resend_rotation = 5.0 * M_PI / 180.0;

    std::size_t pcm_pool_cap = 200;

    std::string dump_mask_dir;  // empty disables PGM dumps
};

// Everything evaluated for one inter-robot candidate, for offline replay of
// the gate cascade.
struct CandidateRecord {
    std::int64_t own_kf = 0;
    int partner = 0;
    std::int64_t partner_kf = 0;
    std::size_t n_partner = 0;
    std::size_t n_own = 0;
    double sad = -1.0;
    bool registered = false;
    Transform2 transform;
    double rmse = -1.0;
    double overlap = -1.0;
    bool accepted = false;
};

struct NodeStats {
    std::size_t keyframes = 0;
    std::size_t ssm_factors = 0;
    std::size_t nssm_factors = 0;
    std::size_t ir_factors = 0;
    std::size_t pr_factors = 0;
    std::size_t candidates_evaluated = 0;
    std::size_t dropped_errors = 0;
};

// One robot's SLAM node: frontend, pose graph, place recognition, registration
// pipeline, and the descriptor-first messaging protocol.
class RobotNode {
public:
    RobotNode(int id, const NodeConfig& cfg, Channel* channel);

    // One simulation tick: sensing, keyframe handling, message draining,
    // optimization and pose re-send. Module errors drop the offending
    // candidate, never the tick.
    void tick(std::int64_t tick_index, double t, const PolarImage& scan,
              const Pose2& dead_reckoning);

    int id() const { return id_; }
    const GraphState& graph() const { return graph_; }
    const NodeStats& stats() const { return stats_; }
    const std::vector<CandidateRecord>& candidate_log() const { return candidate_log_; }

    std::int64_t keyframe_count() const { return next_kf_; }
    std::int64_t keyframe_tick(std::int64_t kf) const { return kf_ticks_.at(kf); }
    const PointCloud2D& keyframe_cloud(std::int64_t kf) const { return kf_clouds_.at(kf); }

    // Every keyframe cloud this robot can place (own plus received partner
    // clouds), transformed into its own frame by the current estimates.
    struct MergedPoint {
        double x, y;
        int robot;
        std::int64_t kf;
    };
    std::vector<MergedPoint> merge_maps() const;

    std::size_t ir_factor_count() const;

private:
    struct PartnerState {
        std::map<std::int64_t, Pose2> poses;            // broadcast estimates, their frame
        std::map<std::int64_t, PointCloud2D> clouds;    // received (decoded)
        std::vector<LoopCandidate> pool;                // PCM pool, src = own
        std::set<std::size_t> accepted;                 // indices into pool
        bool pr_active = false;
        std::map<std::int64_t, std::size_t> pr_edges;   // low kf -> factor index
    };

    void handle_keyframe(std::int64_t tick_index, double t, const PointCloud2D& cloud,
                         const DetectionMask& mask, const Pose2& dead_reckoning);
    void drain_messages(double t);
    void handle_descriptor(const DescriptorMsg& d, double t);
    void handle_cloud_request(const CloudRequestMsg& r, double t);
    void handle_cloud(const CloudMsg& c, double t);
    void handle_loop(const LoopMsg& l);
    void handle_pose_update(const PoseUpdateMsg& u);
    void process_ir_candidate(std::int64_t own_kf, int partner, std::int64_t partner_kf,
                              double t);
    void run_pcm_and_accept(int partner, double t);
    void accept_candidate(int partner, std::size_t pool_index, double t);
    void try_nssm(std::int64_t kf);
    void ensure_pr_chain(int partner);
    void refresh_pr_edges(int partner, std::int64_t kf);
    void retry_pending_loops();
    void maybe_resend(double t);
    void optimize();
    bool partner_has_ir(int partner) const;

    Mat3 registration_covariance(double rmse) const;
    Mat3 odom_chain_covariance(std::int64_t kf_a, std::int64_t kf_b) const;
    OdomLookup make_odom_lookup(int partner) const;

    int id_;
    NodeConfig cfg_;
    Channel* channel_;
    GraphState graph_;
    DescriptorTree tree_;

    std::int64_t next_kf_ = 0;
    bool has_last_kf_ = false;
    Pose2 dr_last_kf_;
    std::map<std::int64_t, PointCloud2D> kf_clouds_;
    std::map<std::int64_t, SceneDescriptor> kf_descriptors_;
    std::map<std::int64_t, SceneImage> kf_images_;
    std::map<std::int64_t, std::int64_t> kf_ticks_;
    std::map<std::int64_t, Pose2> last_broadcast_;

    std::map<int, PartnerState> partners_;
    std::set<std::pair<int, std::int64_t>> requested_;
    std::set<std::int64_t> served_clouds_;
    std::map<std::pair<int, std::int64_t>, std::vector<std::int64_t>> pending_hits_;
    std::vector<LoopMsg> pending_loops_;

    // intra-robot loop closures share the same machinery
    std::vector<LoopCandidate> nssm_pool_;
    std::set<std::size_t> nssm_accepted_;

    std::vector<CandidateRecord> candidate_log_;
    NodeStats stats_;
    bool graph_dirty_ = false;
};

}  // namespace sonarfleet
