#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sonarfleet/config_io.hpp"
#include "sonarfleet/mission.hpp"

using namespace sonarfleet;

namespace {

MissionConfig build_config(const std::string& config_path, int case_id, long long seed,
                           int robots, const std::string& scenario, int steps,
                           const std::string& dump_masks) {
    MissionConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (case_id > 0) cfg.case_id = case_id;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (robots > 0) cfg.robots = robots;
    if (!scenario.empty()) cfg.scenario = scenario_from_name(scenario);
    if (steps > 0) cfg.steps = steps;
    cfg.dump_mask_dir = dump_masks;
    return cfg;
}

void print_summary(const MetricsReport& m) {
    std::printf("case %d seed %llu: success=%s ir_loops=%zu\n", m.case_id,
                static_cast<unsigned long long>(m.seed), m.success ? "yes" : "no", m.ir_accepted);
    std::printf("  full traj : n=%zu mae=%.3f m rmse=%.3f m mae=%.2f deg rmse=%.2f deg\n",
                m.pooled_full.n, m.pooled_full.mae_m, m.pooled_full.rmse_m, m.pooled_full.mae_deg,
                m.pooled_full.rmse_deg);
    std::printf("  ir poses  : n=%zu mae=%.3f m rmse=%.3f m mae=%.2f deg rmse=%.2f deg\n",
                m.pooled_ir.n, m.pooled_ir.mae_m, m.pooled_ir.rmse_m, m.pooled_ir.mae_deg,
                m.pooled_ir.rmse_deg);
    std::printf("  network   : avg=%.1f bits/s min=%.1f max=%.1f total=%lld bits\n",
                m.network.average_bps, m.network.min_bps, m.network.max_bps,
                static_cast<long long>(m.network.total_bits));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributed multi-robot sonar SLAM simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", scenario, dump_masks;
    int case_id = -1, robots = -1, steps = -1;
    long long seed = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--case", case_id, "ablation case 1..5")->check(CLI::Range(1, 5));
        cmd->add_option("--seed", seed, "RNG seed");
        cmd->add_option("--robots", robots, "team size");
        cmd->add_option("--scenario", scenario, "crossing | disjoint | drift_heavy");
        cmd->add_option("--steps", steps, "mission length in ticks");
        cmd->add_option("--out", out_dir, "output directory");
    };

    CLI::App* run = app.add_subcommand("run", "run one mission and write artifacts");
    add_common(run);
    run->add_option("--dump-masks", dump_masks, "directory for CFAR mask PGM dumps");

    CLI::App* sweep = app.add_subcommand("sweep", "repeat a mission over seeds and aggregate");
    add_common(sweep);
    std::vector<long long> sweep_seeds;
    sweep->add_option("--seeds", sweep_seeds, "explicit seed list")->expected(-1);
    int n_seeds = 10;
    sweep->add_option("--n-seeds", n_seeds, "number of seeds (1..n) when --seeds is absent");

    CLI::App* plot = app.add_subcommand("plot-data", "run a mission and emit the utilization series");
    add_common(plot);

    CLI::App* cfg_cmd = app.add_subcommand("write-config", "write the default config as JSON");
    std::string cfg_out = "sonarfleet.json";
    cfg_cmd->add_option("path", cfg_out, "output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cfg_cmd->parsed()) {
            save_config(MissionConfig{}, cfg_out);
            std::printf("wrote %s\n", cfg_out.c_str());
            return 0;
        }

        if (run->parsed()) {
            MissionConfig cfg =
                build_config(config_path, case_id, seed, robots, scenario, steps, dump_masks);
            if (!dump_masks.empty()) std::filesystem::create_directories(dump_masks);
            const MissionResult res = run_mission(cfg);
            write_artifacts(res, cfg, out_dir);
            print_summary(res.metrics);
            for (const auto& node : res.nodes) {
                const NodeStats& st = node->stats();
                std::printf(
                    "  robot %d: kf=%zu ssm=%zu nssm=%zu ir=%zu pr=%zu cand=%zu errs=%zu\n",
                    node->id(), st.keyframes, st.ssm_factors, st.nssm_factors, st.ir_factors,
                    st.pr_factors, st.candidates_evaluated, st.dropped_errors);
            }
            if (!res.causality_violation.empty()) {
                std::fprintf(stderr, "protocol causality violated: %s\n",
                             res.causality_violation.c_str());
                return 2;
            }
            std::printf("artifacts written to %s\n", out_dir.c_str());
            return 0;
        }

        if (sweep->parsed()) {
            MissionConfig base =
                build_config(config_path, case_id, seed, robots, scenario, steps, "");
            std::vector<std::uint64_t> seeds;
            if (!sweep_seeds.empty()) {
                for (long long s : sweep_seeds) seeds.push_back(static_cast<std::uint64_t>(s));
            } else {
                for (int s = 1; s <= n_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
            }
            std::filesystem::create_directories(out_dir);
            std::ofstream table(out_dir + "/sweep.csv");
            table << "case,seed,n_full,mae_full_m,rmse_full_m,mae_full_deg,rmse_full_deg,"
                     "n_ir,mae_ir_m,rmse_ir_m,mae_ir_deg,rmse_ir_deg,net_avg_bps,success\n";
            double sum_mae = 0, sum_rmse = 0, sum_mae_deg = 0, sum_rmse_deg = 0, sum_bps = 0;
            double min_bps = 1e300, max_bps = 0;
            int successes = 0;
            char buf[512];
            for (std::uint64_t s : seeds) {
                MissionConfig cfg = base;
                cfg.seed = s;
                const MissionResult res = run_mission(cfg);
                const MetricsReport& m = res.metrics;
                std::snprintf(buf, sizeof buf,
                              "%d,%llu,%zu,%.6f,%.6f,%.6f,%.6f,%zu,%.6f,%.6f,%.6f,%.6f,%.3f,%d",
                              m.case_id, static_cast<unsigned long long>(m.seed), m.pooled_full.n,
                              m.pooled_full.mae_m, m.pooled_full.rmse_m, m.pooled_full.mae_deg,
                              m.pooled_full.rmse_deg, m.pooled_ir.n, m.pooled_ir.mae_m,
                              m.pooled_ir.rmse_m, m.pooled_ir.mae_deg, m.pooled_ir.rmse_deg,
                              m.network.average_bps, m.success ? 1 : 0);
                table << buf << "\n";
                sum_mae += m.pooled_full.mae_m;
                sum_rmse += m.pooled_full.rmse_m;
                sum_mae_deg += m.pooled_full.mae_deg;
                sum_rmse_deg += m.pooled_full.rmse_deg;
                sum_bps += m.network.average_bps;
                min_bps = std::min(min_bps, m.network.average_bps);
                max_bps = std::max(max_bps, m.network.average_bps);
                successes += m.success ? 1 : 0;
                std::printf("seed %llu done (success=%d)\n",
                            static_cast<unsigned long long>(s), m.success ? 1 : 0);
            }
            const double n = static_cast<double>(seeds.size());
            std::printf("\ncase %d over %zu seeds\n", base.case_id, seeds.size());
            std::printf("  %-28s %8s %8s\n", "", "MAE", "RMSE");
            std::printf("  %-28s %8.3f %8.3f\n", "Euclidean dist (m), mean", sum_mae / n,
                        sum_rmse / n);
            std::printf("  %-28s %8.3f %8.3f\n", "Theta (deg), mean", sum_mae_deg / n,
                        sum_rmse_deg / n);
            std::printf("  network avg %.2f bits/s, min/max %.2f / %.2f\n", sum_bps / n, min_bps,
                        max_bps);
            std::printf("  success rate %d/%zu\n", successes, seeds.size());
            std::printf("table written to %s/sweep.csv\n", out_dir.c_str());
            return 0;
        }

        if (plot->parsed()) {
            MissionConfig cfg =
                build_config(config_path, case_id, seed, robots, scenario, steps, "");
            const MissionResult res = run_mission(cfg);
            std::filesystem::create_directories(out_dir);
            const Utilization util =
                utilization(res.channel->log(), 100, res.metrics.duration);
            write_utilization_csv(util, out_dir + "/utilization.csv");
            std::printf("utilization series written to %s/utilization.csv (%zu points)\n",
                        out_dir.c_str(), util.series.size());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
