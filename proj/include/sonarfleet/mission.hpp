#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sonarfleet/comms.hpp"
#include "sonarfleet/robot_node.hpp"
#include "sonarfleet/sim_world.hpp"

namespace sonarfleet {

enum class Scenario { Crossing, Disjoint, DriftHeavy };

const char* scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

struct MissionConfig {
    int case_id = 4;  // 1..5 ablation
    int robots = 2;
    std::uint64_t seed = 1;
    Scenario scenario = Scenario::Crossing;
    int steps = 200;
    double dt = 1.0;  // seconds per tick
    double speed = 1.0;

    MotionNoise motion_noise{0.05, 0.05, 1.0 * M_PI / 180.0};
    SonarParams sonar;
    NodeConfig node;  // case flags applied on top at run time

    bool meter_per_recipient = false;
    std::string dump_mask_dir;
};

// Ablation switches implied by the case number.
void apply_case(int case_id, NodeConfig& node);

struct ErrorBlock {
    std::size_t n = 0;
    double mae_m = 0.0;
    double rmse_m = 0.0;
    double mae_deg = 0.0;
    double rmse_deg = 0.0;
};

struct PairMetrics {
    int observer = 0;
    int partner = 0;
    ErrorBlock full;       // every partner pose the observer estimated
    ErrorBlock with_ir;    // partner poses touched by inter-robot loops
};

struct MetricsReport {
    int case_id = 0;
    std::uint64_t seed = 0;
    std::vector<PairMetrics> pairs;
    ErrorBlock pooled_full;
    ErrorBlock pooled_ir;
    UtilizationSummary network;
    bool gt_overlap = false;
    bool success = false;
    std::size_t ir_accepted = 0;
    double duration = 0.0;
};

struct MissionResult {
    MetricsReport metrics;
    std::unique_ptr<Channel> channel;
    std::vector<std::unique_ptr<RobotNode>> nodes;
    World world;
    // per robot, per tick true pose
    std::vector<std::vector<Pose2>> true_poses;
    std::string causality_violation;  // empty when the protocol held
};

MissionResult run_mission(const MissionConfig& cfg);

// Writes metrics.csv, channel_log.csv, utilization.csv, graph.g2o (robot 0)
// and merged_map.csv (robot 0) into out_dir.
void write_artifacts(const MissionResult& result, const MissionConfig& cfg,
                     const std::string& out_dir);

void write_metrics_csv(const MetricsReport& m, const std::string& path);

}  // namespace sonarfleet
