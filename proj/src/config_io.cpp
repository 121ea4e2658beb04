#include "sonarfleet/config_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sonarfleet {

using nlohmann::json;

namespace {

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

std::string config_to_json(const MissionConfig& c) {
    json j;
    j["case"] = c.case_id;
    j["robots"] = c.robots;
    j["seed"] = c.seed;
    j["scenario"] = scenario_name(c.scenario);
    j["steps"] = c.steps;
    j["dt"] = c.dt;
    j["speed"] = c.speed;
    j["meter_per_recipient"] = c.meter_per_recipient;

    j["motion_noise"] = {{"sigma_x", c.motion_noise.sigma_x},
                         {"sigma_y", c.motion_noise.sigma_y},
                         {"sigma_theta", c.motion_noise.sigma_theta}};

    j["sonar"] = {{"max_range", c.sonar.max_range},     {"fov", c.sonar.fov},
                  {"n_beams", c.sonar.n_beams},         {"n_range_bins", c.sonar.n_range_bins},
                  {"min_range", c.sonar.min_range},     {"noise_sigma", c.sonar.noise_sigma},
                  {"hit_gain", c.sonar.hit_gain},       {"speckle_sigma", c.sonar.speckle_sigma}};

    const NodeConfig& n = c.node;
    j["cfar"] = {{"train_cells", n.cfar.train_cells},
                 {"guard_cells", n.cfar.guard_cells},
                 {"pfa", n.cfar.pfa}};
    j["frontend_voxel"] = n.frontend_voxel;
    j["compression_voxel"] = n.compression_voxel;
    j["keyframe"] = {{"min_translation", n.keyframe.min_translation},
                     {"min_rotation", n.keyframe.min_rotation}};
    j["odom_sigma"] = {std::sqrt(n.odom_covariance(0, 0)), std::sqrt(n.odom_covariance(1, 1)),
                       std::sqrt(n.odom_covariance(2, 2))};
    j["prior_sigma"] = n.prior_sigma;
    j["scene_cell"] = n.scene_cell;
    j["tree_max_dist"] = n.tree_max_dist;
    j["tree_k"] = n.tree_k;
    j["nssm_min_gap"] = n.nssm_min_gap;
    j["nssm_candidates"] = n.nssm_candidates;
    j["icp"] = {{"max_iter", n.icp.max_iter},
                {"match_radius", n.icp.match_radius},
                {"tol", n.icp.tol}};
    j["global_reg"] = {{"n_starts", n.global_reg.n_starts},
                       {"coarse_iters", n.global_reg.coarse_iters},
                       {"trim_fraction", n.global_reg.trim_fraction}};
    j["ssm_max_rmse"] = n.ssm_max_rmse;
    j["overlap_radius"] = n.overlap_radius;
    j["reg_sigma_floor"] = n.reg_sigma_floor;
    j["reg_sigma_scale_xy"] = n.reg_sigma_scale_xy;
    j["reg_sigma_scale_theta"] = n.reg_sigma_scale_theta;
    j["pr_sigma_xy"] = n.pr_sigma_xy;
    j["pr_sigma_theta"] = n.pr_sigma_theta;
    j["gates"] = {{"min_points", n.gates.min_points},
                  {"max_ratio", n.gates.max_ratio},
                  {"max_sad", n.gates.max_sad},
                  {"min_overlap", n.gates.min_overlap},
                  {"pcm_threshold", n.gates.pcm_threshold}};
    j["resend_translation"] = n.resend_translation;
    j["resend_rotation"] = n.resend_rotation;
    j["pcm_pool_cap"] = n.pcm_pool_cap;
    return j.dump(2);
}

MissionConfig config_from_json(const std::string& text) {
    MissionConfig c;
    const json j = json::parse(text);
    get_to(j, "case", c.case_id);
    get_to(j, "robots", c.robots);
    get_to(j, "seed", c.seed);
    if (j.contains("scenario")) c.scenario = scenario_from_name(j.at("scenario").get<std::string>());
    get_to(j, "steps", c.steps);
    get_to(j, "dt", c.dt);
    get_to(j, "speed", c.speed);
    get_to(j, "meter_per_recipient", c.meter_per_recipient);

    if (j.contains("motion_noise")) {
        const json& m = j.at("motion_noise");
        get_to(m, "sigma_x", c.motion_noise.sigma_x);
        get_to(m, "sigma_y", c.motion_noise.sigma_y);
        get_to(m, "sigma_theta", c.motion_noise.sigma_theta);
    }
    if (j.contains("sonar")) {
        const json& s = j.at("sonar");
        get_to(s, "max_range", c.sonar.max_range);
        get_to(s, "fov", c.sonar.fov);
        get_to(s, "n_beams", c.sonar.n_beams);
        get_to(s, "n_range_bins", c.sonar.n_range_bins);
        get_to(s, "min_range", c.sonar.min_range);
        get_to(s, "noise_sigma", c.sonar.noise_sigma);
        get_to(s, "hit_gain", c.sonar.hit_gain);
        get_to(s, "speckle_sigma", c.sonar.speckle_sigma);
    }
    NodeConfig& n = c.node;
    if (j.contains("cfar")) {
        const json& f = j.at("cfar");
        get_to(f, "train_cells", n.cfar.train_cells);
        get_to(f, "guard_cells", n.cfar.guard_cells);
        get_to(f, "pfa", n.cfar.pfa);
    }
    get_to(j, "frontend_voxel", n.frontend_voxel);
    get_to(j, "compression_voxel", n.compression_voxel);
    if (j.contains("keyframe")) {
        const json& k = j.at("keyframe");
        get_to(k, "min_translation", n.keyframe.min_translation);
        get_to(k, "min_rotation", n.keyframe.min_rotation);
    }
    if (j.contains("odom_sigma")) {
        const auto v = j.at("odom_sigma").get<std::vector<double>>();
        if (v.size() == 3)
            n.odom_covariance = Vec3(v[0] * v[0], v[1] * v[1], v[2] * v[2]).asDiagonal();
    }
    get_to(j, "prior_sigma", n.prior_sigma);
    get_to(j, "scene_cell", n.scene_cell);
    get_to(j, "tree_max_dist", n.tree_max_dist);
    get_to(j, "tree_k", n.tree_k);
    get_to(j, "nssm_min_gap", n.nssm_min_gap);
    get_to(j, "nssm_candidates", n.nssm_candidates);
    if (j.contains("icp")) {
        const json& i = j.at("icp");
        get_to(i, "max_iter", n.icp.max_iter);
        get_to(i, "match_radius", n.icp.match_radius);
        get_to(i, "tol", n.icp.tol);
        n.global_reg.icp = n.icp;
    }
    if (j.contains("global_reg")) {
        const json& g = j.at("global_reg");
        get_to(g, "n_starts", n.global_reg.n_starts);
        get_to(g, "coarse_iters", n.global_reg.coarse_iters);
        get_to(g, "trim_fraction", n.global_reg.trim_fraction);
    }
    get_to(j, "ssm_max_rmse", n.ssm_max_rmse);
    get_to(j, "overlap_radius", n.overlap_radius);
    get_to(j, "reg_sigma_floor", n.reg_sigma_floor);
    get_to(j, "reg_sigma_scale_xy", n.reg_sigma_scale_xy);
    get_to(j, "reg_sigma_scale_theta", n.reg_sigma_scale_theta);
    get_to(j, "pr_sigma_xy", n.pr_sigma_xy);
    get_to(j, "pr_sigma_theta", n.pr_sigma_theta);
    if (j.contains("gates")) {
        const json& g = j.at("gates");
        get_to(g, "min_points", n.gates.min_points);
        get_to(g, "max_ratio", n.gates.max_ratio);
        get_to(g, "max_sad", n.gates.max_sad);
        get_to(g, "min_overlap", n.gates.min_overlap);
        get_to(g, "pcm_threshold", n.gates.pcm_threshold);
    }
    get_to(j, "resend_translation", n.resend_translation);
    get_to(j, "resend_rotation", n.resend_rotation);
    get_to(j, "pcm_pool_cap", n.pcm_pool_cap);
    return c;
}

MissionConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_json(ss.str());
}

void save_config(const MissionConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    f << config_to_json(cfg) << "\n";
}

}  // namespace sonarfleet
