// Compares the OpenMP kernels against their serial reference implementations
// and verifies that both produce identical results.
#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sonarfleet/pcm.hpp"
#include "sonarfleet/registration.hpp"
#include "sonarfleet/sim_world.hpp"
#include "sonarfleet/sonar_frontend.hpp"

using namespace sonarfleet;
using Clock = std::chrono::steady_clock;

namespace {

template <typename F>
double time_ms(F&& f, int reps = 3) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        f();
        const auto t1 = Clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-24s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   identical %s\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms, identical ? "yes" : "NO");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp threads: %d\n\n", omp_get_max_threads());
#else
    std::printf("built without openmp; parallel == serial\n\n");
#endif
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    // --- cfar ---
    {
        PolarImage img;
        img.n_range_bins = 1200;
        img.n_beams = 512;
        img.range_resolution = 0.05;
        img.bearings = fan_bearings(130.0 * M_PI / 180.0, img.n_beams);
        img.intensities.resize(static_cast<std::size_t>(img.n_range_bins) * img.n_beams);
        for (double& v : img.intensities) v = -std::log(uni(rng) + 1e-12);
        CfarParams p;
        DetectionMask serial, parallel;
        const double ts = time_ms([&] { serial = cfar_detect_serial(img, p); });
        const double tp = time_ms([&] { parallel = cfar_detect(img, p); });
        report("cfar_detect", ts, tp, serial == parallel);
    }

    // --- global registration ---
    {
        PointCloud2D src;
        for (int i = 0; i < 1200; ++i)
            src.points.push_back(Point2{uni(rng) * 40.0 - 20.0, uni(rng) * 20.0 - 10.0});
        const Transform2 truth(3.0, -2.0, 2.3);
        PointCloud2D tgt = transform_cloud(truth, src);
        RegistrationResult rs, rp;
        const double ts = time_ms([&] { rs = global_register_serial(src, tgt); }, 2);
        const double tp = time_ms([&] { rp = global_register(src, tgt); }, 2);
        const bool same = rs.transform == rp.transform && rs.rmse == rp.rmse &&
                          rs.iterations == rp.iterations;
        report("global_register", ts, tp, same);
    }

    // --- overlap ---
    {
        PointCloud2D src, tgt;
        for (int i = 0; i < 60000; ++i) {
            src.points.push_back(Point2{uni(rng) * 60.0, uni(rng) * 60.0});
            tgt.points.push_back(Point2{uni(rng) * 60.0, uni(rng) * 60.0});
        }
        double vs = 0, vp = 0;
        const double ts = time_ms([&] { vs = overlap_serial(src, tgt, Transform2()); });
        const double tp = time_ms([&] { vp = overlap(src, tgt, Transform2()); });
        report("overlap", ts, tp, vs == vp);
    }

    // --- pcm consistency matrix ---
    {
        std::vector<LoopCandidate> cands;
        std::normal_distribution<double> g(0.0, 0.05);
        for (int i = 0; i < 150; ++i) {
            LoopCandidate c;
            c.src = KfKey{0, i};
            c.dst = KfKey{1, i + 3};
            c.relative = Transform2(5.0 + g(rng), g(rng), 0.1 * g(rng));
            c.covariance = Vec3(0.01, 0.01, 0.001).asDiagonal();
            cands.push_back(c);
        }
        OdomLookup odom = [](int, std::int64_t a, std::int64_t b) {
            OdomEdge e;
            e.relative = Transform2(static_cast<double>(b - a), 0.0, 0.0);
            e.covariance = Mat3::Identity() * 0.01;
            return e;
        };
        std::vector<double> ms, mp;
        const double ts = time_ms([&] { ms = consistency_matrix_serial(cands, odom); });
        const double tp = time_ms([&] { mp = consistency_matrix(cands, odom); });
        report("consistency_matrix", ts, tp, ms == mp);
    }
    return 0;
}
