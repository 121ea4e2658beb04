#include "sonarfleet/mission.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace sonarfleet {

const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Crossing: return "crossing";
        case Scenario::Disjoint: return "disjoint";
        case Scenario::DriftHeavy: return "drift_heavy";
    }
    return "?";
}

Scenario scenario_from_name(const std::string& name) {
    if (name == "crossing") return Scenario::Crossing;
    if (name == "disjoint") return Scenario::Disjoint;
    if (name == "drift_heavy") return Scenario::DriftHeavy;
    throw std::invalid_argument("unknown scenario: " + name);
}

void apply_case(int case_id, NodeConfig& node) {
    if (case_id < 1 || case_id > 5) throw std::invalid_argument("case must be 1..5");
    node.gates.use_scene_image = case_id >= 2;
    node.use_pcm = case_id >= 3;
    node.use_compression = case_id == 4;
    node.resend_enabled = case_id != 5;
}

namespace {

// waypoint circuits per scenario; robots follow them closed-loop
struct ScenarioSetup {
    World world;
    std::vector<Pose2> starts;                      // true start pose per robot
    std::vector<std::vector<Point2>> waypoints;     // cyclic per robot
};

void add_box(World& w, double x0, double y0, double x1, double y1, double reflect) {
    w.walls.push_back(Wall{{x0, y0}, {x1, y0}, reflect});
    w.walls.push_back(Wall{{x1, y0}, {x1, y1}, reflect});
    w.walls.push_back(Wall{{x1, y1}, {x0, y1}, reflect});
    w.walls.push_back(Wall{{x0, y1}, {x0, y0}, reflect});
}

void sprinkle_scatterers(World& w, std::mt19937_64& rng, int count, double x0, double y0,
                         double x1, double y1) {
    std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1), ur(0.55, 1.0);
    for (int i = 0; i < count; ++i)
        w.scatterers.push_back(Scatterer{{ux(rng), uy(rng)}, 0.3, ur(rng)});
}

ScenarioSetup crossing_setup(const MissionConfig& cfg) {
    ScenarioSetup s;
    s.world.seed = cfg.seed;
    s.world.extent = 90.0;
    // harbor-like constellation: short walls at varied angles plus point
    // scatterers, kept off the driving lanes (|y| around 4). No long parallel
    // structure, so scenes pin both translation and rotation.
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x5ce7));
    std::uniform_real_distribution<double> ux(-32.0, 32.0), uang(-M_PI, M_PI),
        ulen(4.0, 11.0), uref(0.6, 1.0), uside(0.0, 1.0);
    auto band_y = [&](std::mt19937_64& r) {
        const double roll = uside(r);
        if (roll < 0.4) return std::uniform_real_distribution<double>(-2.2, 2.2)(r);
        if (roll < 0.7) return std::uniform_real_distribution<double>(6.0, 14.0)(r);
        return std::uniform_real_distribution<double>(-14.0, -6.0)(r);
    };
    for (int i = 0; i < 30; ++i) {
        const double cx = ux(rng), cy = band_y(rng), th = uang(rng), l = ulen(rng) / 2.0;
        Wall w;
        w.a = Point2{cx - l * std::cos(th), cy - l * std::sin(th)};
        w.b = Point2{cx + l * std::cos(th), cy + l * std::sin(th)};
        w.reflectivity = uref(rng);
        s.world.walls.push_back(w);
    }
    sprinkle_scatterers(s.world, rng, 40, -32.0, -2.5, 32.0, 2.5);
    sprinkle_scatterers(s.world, rng, 30, -32.0, 5.5, 32.0, 14.0);
    sprinkle_scatterers(s.world, rng, 30, -32.0, -14.0, 32.0, -5.5);

    // same rectangle circuit, started half a lap apart and facing opposite ways
    const std::vector<Point2> loop = {{-28.0, -4.0}, {28.0, -4.0}, {28.0, 4.0}, {-28.0, 4.0}};
    for (int r = 0; r < cfg.robots; ++r) {
        std::vector<Point2> wp = loop;
        const std::size_t shift = (static_cast<std::size_t>(r) * wp.size() / cfg.robots) % wp.size();
        std::rotate(wp.begin(), wp.begin() + shift, wp.end());
        s.waypoints.push_back(wp);
        const Point2 p0 = wp[0];
        const Point2 p1 = wp[1];
        s.starts.push_back(Pose2(p0.x, p0.y, std::atan2(p1.y - p0.y, p1.x - p0.x)));
    }
    return s;
}

ScenarioSetup disjoint_setup(const MissionConfig& cfg) {
    ScenarioSetup s;
    s.world.seed = cfg.seed;
    s.world.extent = 160.0;
    // room A: tight scatterer field, close-range returns
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xd15));
    sprinkle_scatterers(s.world, rng, 24, -68.0, -6.0, -52.0, 6.0);
    // room B: distant walls only, far-range returns
    add_box(s.world, 40.0, -22.0, 84.0, 22.0, 0.9);

    s.starts.push_back(Pose2(-66.0, 0.0, 0.0));
    s.waypoints.push_back({{-54.0, 0.0}, {-66.0, 0.0}});
    s.starts.push_back(Pose2(56.0, 0.0, 0.0));
    s.waypoints.push_back({{68.0, 0.0}, {56.0, 0.0}});
    for (int r = 2; r < cfg.robots; ++r) {  // extra robots share room B
        s.starts.push_back(Pose2(56.0, 3.0 * (r - 1), 0.0));
        s.waypoints.push_back({{68.0, 3.0 * (r - 1)}, {56.0, 3.0 * (r - 1)}});
    }
    return s;
}

ScenarioSetup drift_setup(const MissionConfig& cfg) {
    ScenarioSetup s = crossing_setup(cfg);
    return s;  // same course; the mission raises the noise
}

ScenarioSetup make_scenario(const MissionConfig& cfg) {
    switch (cfg.scenario) {
        case Scenario::Crossing: return crossing_setup(cfg);
        case Scenario::Disjoint: return disjoint_setup(cfg);
        case Scenario::DriftHeavy: return drift_setup(cfg);
    }
    throw std::invalid_argument("bad scenario");
}

// simple waypoint follower: rotate toward the target, then drive
struct Pilot {
    std::vector<Point2> waypoints;
    std::size_t index = 0;
    double speed = 1.0;

    Transform2 control(const Pose2& pose) {
        const Point2& wp = waypoints[index];
        double dx = wp.x - pose.x, dy = wp.y - pose.y;
        if (std::hypot(dx, dy) < 1.2) {
            index = (index + 1) % waypoints.size();
            const Point2& nwp = waypoints[index];
            dx = nwp.x - pose.x;
            dy = nwp.y - pose.y;
        }
        const double err = wrap_angle(std::atan2(dy, dx) - pose.theta);
        const double max_turn = 30.0 * M_PI / 180.0;
        if (std::abs(err) > 0.35) return Transform2(0.0, 0.0, std::clamp(err, -max_turn, max_turn));
        return Transform2(std::min(speed, std::hypot(dx, dy)), 0.0,
                          std::clamp(err, -0.1, 0.1));
    }
};

ErrorBlock error_block(const std::vector<double>& dist, const std::vector<double>& ddeg) {
    ErrorBlock b;
    b.n = dist.size();
    if (b.n == 0) return b;
    double sum_d = 0, sq_d = 0, sum_a = 0, sq_a = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        sum_d += dist[i];
        sq_d += dist[i] * dist[i];
        sum_a += ddeg[i];
        sq_a += ddeg[i] * ddeg[i];
    }
    b.mae_m = sum_d / b.n;
    b.rmse_m = std::sqrt(sq_d / b.n);
    b.mae_deg = sum_a / b.n;
    b.rmse_deg = std::sqrt(sq_a / b.n);
    return b;
}

}  // namespace

MissionResult run_mission(const MissionConfig& cfg_in) {
    MissionConfig cfg = cfg_in;
    if (cfg.robots < 2) throw std::invalid_argument("mission needs at least 2 robots");
    if (cfg.case_id < 1 || cfg.case_id > 5) throw std::invalid_argument("case must be 1..5");
    apply_case(cfg.case_id, cfg.node);
    cfg.node.sonar_max_range = cfg.sonar.max_range;
    cfg.node.dump_mask_dir = cfg.dump_mask_dir;
    if (cfg.scenario == Scenario::DriftHeavy) {
        cfg.motion_noise.sigma_x *= 2.5;
        cfg.motion_noise.sigma_y *= 2.5;
        cfg.motion_noise.sigma_theta *= 2.5;
    }

    const ScenarioSetup setup = make_scenario(cfg);

    MissionResult result;
    result.world = setup.world;
    result.channel = std::make_unique<Channel>(cfg.robots, cfg.meter_per_recipient);
    result.true_poses.assign(cfg.robots, {});

    std::vector<std::unique_ptr<RobotNode>> nodes;
    std::vector<RobotMotionState> motion(cfg.robots);
    std::vector<Pilot> pilots(cfg.robots);
    std::vector<std::mt19937_64> rng_true, rng_dr;
    for (int r = 0; r < cfg.robots; ++r) {
        nodes.push_back(std::make_unique<RobotNode>(r, cfg.node, result.channel.get()));
        motion[r].true_pose = setup.starts[r];
        motion[r].dead_reckoning = Pose2::identity();
        pilots[r].waypoints = setup.waypoints[r];
        pilots[r].speed = cfg.speed;
        rng_true.emplace_back(mix_seed(cfg.seed, 2 * r + 1));
        rng_dr.emplace_back(mix_seed(cfg.seed, 2 * r + 2));
    }

    for (int step = 0; step < cfg.steps; ++step) {
        const double t = step * cfg.dt;
        for (int r = 0; r < cfg.robots; ++r) {
            if (step > 0) {
                const Transform2 u = pilots[r].control(motion[r].true_pose);
                motion[r] = step_robot(motion[r], u, cfg.motion_noise, rng_true[r], rng_dr[r]);
            }
            result.true_poses[r].push_back(motion[r].true_pose);
            const PolarImage scan = simulate_scan(setup.world, motion[r].true_pose, cfg.sonar,
                                                  static_cast<std::uint64_t>(step));
            nodes[r]->tick(step, t, scan, motion[r].dead_reckoning);
        }
    }

    // ---- metrics ----
    MetricsReport& m = result.metrics;
    m.case_id = cfg.case_id;
    m.seed = cfg.seed;
    m.duration = (cfg.steps - 1) * cfg.dt;

    std::vector<double> pooled_d, pooled_a, pooled_ir_d, pooled_ir_a;
    for (int n = 0; n < cfg.robots; ++n) {
        const Pose2 frame_n = setup.starts[n];
        for (int p = 0; p < cfg.robots; ++p) {
            if (p == n) continue;
            PairMetrics pm;
            pm.observer = n;
            pm.partner = p;
            std::vector<double> d, a, d_ir, a_ir;
            // partner keyframes with IR involvement in the observer graph
            std::set<std::int64_t> ir_kfs;
            for (const Factor& f : nodes[n]->graph().factors()) {
                if (f.kind != FactorKind::InterRobot) continue;
                if (f.a.robot == p) ir_kfs.insert(f.a.kf);
                if (f.b.robot == p) ir_kfs.insert(f.b.kf);
            }
            for (const auto& [key, est] : nodes[n]->graph().poses()) {
                if (key.robot != p) continue;
                if (key.kf >= nodes[p]->keyframe_count()) continue;
                const std::int64_t tick = nodes[p]->keyframe_tick(key.kf);
                const Pose2 gt = between(frame_n, result.true_poses[p][tick]);
                const double dist = std::hypot(est.x - gt.x, est.y - gt.y);
                const double ddeg =
                    std::abs(wrap_angle(est.theta - gt.theta)) * 180.0 / M_PI;
                d.push_back(dist);
                a.push_back(ddeg);
                pooled_d.push_back(dist);
                pooled_a.push_back(ddeg);
                if (ir_kfs.count(key.kf)) {
                    d_ir.push_back(dist);
                    a_ir.push_back(ddeg);
                    pooled_ir_d.push_back(dist);
                    pooled_ir_a.push_back(ddeg);
                }
            }
            pm.full = error_block(d, a);
            pm.with_ir = error_block(d_ir, a_ir);
            m.pairs.push_back(pm);
        }
    }
    m.pooled_full = error_block(pooled_d, pooled_a);
    m.pooled_ir = error_block(pooled_ir_d, pooled_ir_a);

    const Utilization util = utilization(result.channel->log(), 100, m.duration);
    m.network = util.summary;

    // ground-truth overlap: any two robots' keyframes within half the sonar range
    for (int n = 0; n < cfg.robots && !m.gt_overlap; ++n) {
        for (int p = n + 1; p < cfg.robots && !m.gt_overlap; ++p) {
            for (std::int64_t ki = 0; ki < nodes[n]->keyframe_count() && !m.gt_overlap; ++ki) {
                const Pose2 a = result.true_poses[n][nodes[n]->keyframe_tick(ki)];
                for (std::int64_t kj = 0; kj < nodes[p]->keyframe_count(); ++kj) {
                    const Pose2 b = result.true_poses[p][nodes[p]->keyframe_tick(kj)];
                    if (std::hypot(a.x - b.x, a.y - b.y) < cfg.sonar.max_range * 0.5) {
                        m.gt_overlap = true;
                        break;
                    }
                }
            }
        }
    }
    bool all_have_ir = true;
    for (int r = 0; r < cfg.robots; ++r) {
        m.ir_accepted += nodes[r]->stats().ir_factors;
        if (nodes[r]->ir_factor_count() == 0) all_have_ir = false;
    }
    m.success = m.gt_overlap ? all_have_ir : true;

    result.causality_violation = check_protocol_causality(result.channel->trace());
    result.nodes = std::move(nodes);
    return result;
}

void write_metrics_csv(const MetricsReport& m, const std::string& path) {
    std::ofstream f(path);
    f << "case,seed,observer,partner,n_full,mae_full_m,rmse_full_m,mae_full_deg,rmse_full_deg,"
         "n_ir,mae_ir_m,rmse_ir_m,mae_ir_deg,rmse_ir_deg,net_avg_bps,net_min_bps,net_max_bps,"
         "total_bits,duration_s,gt_overlap,success,ir_accepted\n";
    char buf[512];
    auto row = [&](const std::string& obs, const std::string& par, const ErrorBlock& full,
                   const ErrorBlock& ir) {
        std::snprintf(buf, sizeof buf,
                      "%d,%llu,%s,%s,%zu,%.6f,%.6f,%.6f,%.6f,%zu,%.6f,%.6f,%.6f,%.6f,%.3f,%.3f,"
                      "%.3f,%lld,%.3f,%d,%d,%zu",
                      m.case_id, static_cast<unsigned long long>(m.seed), obs.c_str(), par.c_str(),
                      full.n, full.mae_m, full.rmse_m, full.mae_deg, full.rmse_deg, ir.n, ir.mae_m,
                      ir.rmse_m, ir.mae_deg, ir.rmse_deg, m.network.average_bps, m.network.min_bps,
                      m.network.max_bps, static_cast<long long>(m.network.total_bits), m.duration,
                      m.gt_overlap ? 1 : 0, m.success ? 1 : 0, m.ir_accepted);
        f << buf << "\n";
    };
    for (const PairMetrics& pm : m.pairs)
        row(std::to_string(pm.observer), std::to_string(pm.partner), pm.full, pm.with_ir);
    row("all", "all", m.pooled_full, m.pooled_ir);
}

void write_artifacts(const MissionResult& result, const MissionConfig& cfg,
                     const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_metrics_csv(result.metrics, out_dir + "/metrics.csv");
    result.channel->write_log_csv(out_dir + "/channel_log.csv");
    const Utilization util =
        utilization(result.channel->log(), 100, result.metrics.duration);
    write_utilization_csv(util, out_dir + "/utilization.csv");
    result.nodes[0]->graph().write_g2o(out_dir + "/graph.g2o");

    std::ofstream mm(out_dir + "/merged_map.csv");
    mm << "x,y,robot,kf\n";
    char buf[160];
    for (const auto& pt : result.nodes[0]->merge_maps()) {
        std::snprintf(buf, sizeof buf, "%.4f,%.4f,%d,%lld", pt.x, pt.y, pt.robot,
                      static_cast<long long>(pt.kf));
        mm << buf << "\n";
    }

    // candidate funnel per robot, for offline gate analysis
    std::ofstream cands(out_dir + "/candidates.csv");
    cands << "observer,own_kf,partner,partner_kf,n_partner,n_own,sad,registered,tx,ty,ttheta,"
             "rmse,overlap,accepted\n";
    for (std::size_t r = 0; r < result.nodes.size(); ++r) {
        for (const CandidateRecord& c : result.nodes[r]->candidate_log()) {
            std::snprintf(buf, sizeof buf,
                          "%zu,%lld,%d,%lld,%zu,%zu,%.4f,%d,%.4f,%.4f,%.5f,%.4f,%.4f,%d", r,
                          static_cast<long long>(c.own_kf), c.partner,
                          static_cast<long long>(c.partner_kf), c.n_partner, c.n_own, c.sad,
                          c.registered ? 1 : 0, c.transform.x, c.transform.y, c.transform.theta,
                          c.rmse, c.overlap, c.accepted ? 1 : 0);
            cands << buf << "\n";
        }
    }

    // ground truth per keyframe, for offline evaluation and plots
    std::ofstream gt(out_dir + "/ground_truth.csv");
    gt << "robot,kf,tick,x,y,theta\n";
    for (std::size_t r = 0; r < result.nodes.size(); ++r) {
        const RobotNode& node = *result.nodes[r];
        for (std::int64_t kf = 0; kf < node.keyframe_count(); ++kf) {
            const std::int64_t tick = node.keyframe_tick(kf);
            const Pose2& p = result.true_poses[r][tick];
            std::snprintf(buf, sizeof buf, "%zu,%lld,%lld,%.6f,%.6f,%.6f", r,
                          static_cast<long long>(kf), static_cast<long long>(tick), p.x, p.y,
                          p.theta);
            gt << buf << "\n";
        }
    }
    (void)cfg;
}

}  // namespace sonarfleet
