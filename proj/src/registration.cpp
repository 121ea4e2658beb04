#include "sonarfleet/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <unordered_map>

#include "sonarfleet/errors.hpp"

namespace sonarfleet {

namespace {

struct CellKey {
    long i, j;
    bool operator==(const CellKey& o) const { return i == o.i && j == o.j; }
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const {
        return std::hash<long>()(k.i) * 1000003u ^ std::hash<long>()(k.j);
    }
};

}  // namespace

struct NnGrid::Impl {
    std::vector<Point2> points;
    double cell;
    double radius_sq;
    std::unordered_map<CellKey, std::vector<int>, CellHash> buckets;
};

NnGrid::NnGrid(const std::vector<Point2>& points, double radius) {
    auto impl = std::make_shared<Impl>();
    impl->points = points;
    impl->cell = std::max(radius, 1e-9);
    impl->radius_sq = radius * radius;
    for (int k = 0; k < static_cast<int>(points.size()); ++k) {
        const CellKey key{static_cast<long>(std::floor(points[k].x / impl->cell)),
                          static_cast<long>(std::floor(points[k].y / impl->cell))};
        impl->buckets[key].push_back(k);
    }
    impl_ = std::move(impl);
}

int NnGrid::nearest(const Point2& q, double* sq_out) const {
    const Impl& im = *impl_;
    const long ci = static_cast<long>(std::floor(q.x / im.cell));
    const long cj = static_cast<long>(std::floor(q.y / im.cell));
    int best = -1;
    double best_sq = std::numeric_limits<double>::infinity();
    for (long di = -1; di <= 1; ++di) {
        for (long dj = -1; dj <= 1; ++dj) {
            auto it = im.buckets.find(CellKey{ci + di, cj + dj});
            if (it == im.buckets.end()) continue;
            for (int idx : it->second) {
                const double dx = im.points[idx].x - q.x;
                const double dy = im.points[idx].y - q.y;
                const double sq = dx * dx + dy * dy;
                if (sq > im.radius_sq) continue;
                if (sq < best_sq || (sq == best_sq && (best == -1 || idx < best))) {
                    best = idx;
                    best_sq = sq;
                }
            }
        }
    }
    if (best >= 0 && sq_out) *sq_out = best_sq;
    return best;
}

namespace {

struct Pairing {
    std::vector<int> src_idx;
    std::vector<int> tgt_idx;
    std::size_t size() const { return src_idx.size(); }
};

Point2 apply(const Transform2& t, const Point2& p) {
    const double c = std::cos(t.theta), s = std::sin(t.theta);
    return Point2{t.x + c * p.x - s * p.y, t.y + s * p.x + c * p.y};
}

Pairing associate(const std::vector<Point2>& src, const NnGrid& grid, const Transform2& t) {
    Pairing pr;
    pr.src_idx.reserve(src.size());
    pr.tgt_idx.reserve(src.size());
    for (int k = 0; k < static_cast<int>(src.size()); ++k) {
        const Point2 q = apply(t, src[k]);
        const int j = grid.nearest(q);
        if (j >= 0) {
            pr.src_idx.push_back(k);
            pr.tgt_idx.push_back(j);
        }
    }
    return pr;
}

double pair_objective(const std::vector<Point2>& src, const std::vector<Point2>& tgt,
                      const Pairing& pr, const Transform2& t) {
    double sum = 0.0;
    for (std::size_t k = 0; k < pr.size(); ++k) {
        const Point2 q = apply(t, src[pr.src_idx[k]]);
        const Point2& p = tgt[pr.tgt_idx[k]];
        const double dx = q.x - p.x, dy = q.y - p.y;
        sum += dx * dx + dy * dy;
    }
    return sum;
}

// Closed-form least squares for t_i ~ R s_i + T: centroids plus the 2x2
// cross-covariance angle.
Transform2 solve_alignment(const std::vector<Point2>& src, const std::vector<Point2>& tgt,
                           const Pairing& pr) {
    const double n = static_cast<double>(pr.size());
    double sx = 0, sy = 0, tx = 0, ty = 0;
    for (std::size_t k = 0; k < pr.size(); ++k) {
        sx += src[pr.src_idx[k]].x;
        sy += src[pr.src_idx[k]].y;
        tx += tgt[pr.tgt_idx[k]].x;
        ty += tgt[pr.tgt_idx[k]].y;
    }
    sx /= n; sy /= n; tx /= n; ty /= n;
    double sxx = 0, sxy = 0, syx = 0, syy = 0;
    for (std::size_t k = 0; k < pr.size(); ++k) {
        const double ax = src[pr.src_idx[k]].x - sx, ay = src[pr.src_idx[k]].y - sy;
        const double bx = tgt[pr.tgt_idx[k]].x - tx, by = tgt[pr.tgt_idx[k]].y - ty;
        sxx += ax * bx; sxy += ax * by; syx += ay * bx; syy += ay * by;
    }
    const double theta = std::atan2(sxy - syx, sxx + syy);
    const double c = std::cos(theta), s = std::sin(theta);
    return Transform2(tx - (c * sx - s * sy), ty - (s * sx + c * sy), theta);
}

RegistrationResult icp_impl(const std::vector<Point2>& src, const NnGrid& grid,
                            const std::vector<Point2>& tgt, const Transform2& init,
                            const IcpParams& p) {
    RegistrationResult res;
    res.transform = init;
    Pairing pr;
    for (int it = 0; it < p.max_iter; ++it) {
        pr = associate(src, grid, res.transform);
        if (pr.size() < 3) throw DegenerateError("icp: fewer than 3 matched pairs");
        const double pre = pair_objective(src, tgt, pr, res.transform);
        const Transform2 next = solve_alignment(src, tgt, pr);
        const double post = pair_objective(src, tgt, pr, next);
        res.objective_pre.push_back(pre);
        res.objective_post.push_back(post);
        const double dt = std::hypot(next.x - res.transform.x, next.y - res.transform.y);
        const double dr = std::abs(wrap_angle(next.theta - res.transform.theta));
        res.transform = next;
        ++res.iterations;
        if (dt + dr < p.tol) {
            res.converged = true;
            break;
        }
    }
    // final association for reporting
    pr = associate(src, grid, res.transform);
    if (pr.size() < 3) throw DegenerateError("icp: fewer than 3 matched pairs after refinement");
    res.matches = pr.size();
    res.rmse = std::sqrt(pair_objective(src, tgt, pr, res.transform) / pr.size());
    return res;
}

double trimmed_rmse(const std::vector<Point2>& src, const NnGrid& grid, const Transform2& t,
                    double trim_fraction) {
    std::vector<double> sq;
    sq.reserve(src.size());
    for (const Point2& s : src) {
        double d;
        if (grid.nearest(apply(t, s), &d) >= 0) sq.push_back(d);
    }
    if (sq.empty()) return std::numeric_limits<double>::infinity();
    std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(sq.size() * trim_fraction));
    std::nth_element(sq.begin(), sq.begin() + (keep - 1), sq.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < keep; ++k) sum += sq[k];
    return std::sqrt(sum / keep);
}

Point2 centroid(const std::vector<Point2>& pts) {
    double x = 0, y = 0;
    for (const Point2& p : pts) {
        x += p.x;
        y += p.y;
    }
    const double n = static_cast<double>(pts.size());
    return Point2{x / n, y / n};
}

std::vector<Point2> centered(const std::vector<Point2>& pts, const Point2& c) {
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (const Point2& p : pts) out.push_back(Point2{p.x - c.x, p.y - c.y});
    return out;
}

struct StartScore {
    double score = std::numeric_limits<double>::infinity();
    Transform2 transform;
    bool ok = false;
};

// One rotation start on the centered clouds: short ICP, then trimmed score.
StartScore evaluate_start(const std::vector<Point2>& src_c, const NnGrid& grid,
                          const std::vector<Point2>& tgt_c, double theta,
                          const GlobalRegParams& p) {
    StartScore s;
    IcpParams coarse = p.icp;
    coarse.max_iter = p.coarse_iters;
    try {
        RegistrationResult r = icp_impl(src_c, grid, tgt_c, Transform2(0.0, 0.0, theta), coarse);
        s.transform = r.transform;
        s.score = trimmed_rmse(src_c, grid, r.transform, p.trim_fraction);
        s.ok = true;
    } catch (const DegenerateError&) {
        s.ok = false;
    }
    return s;
}

template <bool Parallel>
RegistrationResult global_register_impl(const PointCloud2D& source, const PointCloud2D& target,
                                        const GlobalRegParams& p) {
    if (source.points.size() < 10 || target.points.size() < 10)
        throw DegenerateError("global_register: clouds must have >= 10 points");

    const Point2 cs = centroid(source.points);
    const Point2 ct = centroid(target.points);
    const std::vector<Point2> src_c = centered(source.points, cs);
    const std::vector<Point2> tgt_c = centered(target.points, ct);
    const NnGrid grid(tgt_c, p.icp.match_radius);

    std::vector<StartScore> starts(p.n_starts);
    if constexpr (Parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int s = 0; s < p.n_starts; ++s) {
            const double theta = -M_PI + s * (2.0 * M_PI / p.n_starts);
            starts[s] = evaluate_start(src_c, grid, tgt_c, theta, p);
        }
    } else {
        for (int s = 0; s < p.n_starts; ++s) {
            const double theta = -M_PI + s * (2.0 * M_PI / p.n_starts);
            starts[s] = evaluate_start(src_c, grid, tgt_c, theta, p);
        }
    }

    // deterministic reduction: min score, ties to the lower start index
    int best = -1;
    for (int s = 0; s < p.n_starts; ++s) {
        if (!starts[s].ok) continue;
        if (best < 0 || starts[s].score < starts[best].score) best = s;
    }
    if (best < 0) throw DegenerateError("global_register: every rotation start degenerated");

    RegistrationResult res = icp_impl(src_c, grid, tgt_c, starts[best].transform, p.icp);

    // recompose into the original (non-centered) frames
    const Transform2& tc = res.transform;
    const double c = std::cos(tc.theta), s = std::sin(tc.theta);
    res.transform = Transform2(ct.x + tc.x - (c * cs.x - s * cs.y),
                               ct.y + tc.y - (s * cs.x + c * cs.y), tc.theta);
    // rmse is translation invariant; recompute matches in original frames
    return res;
}

template <bool Parallel>
double overlap_impl(const PointCloud2D& source, const PointCloud2D& target, const Transform2& t,
                    double radius) {
    if (source.empty() || target.empty()) return 0.0;
    const NnGrid grid(target.points, radius);
    const int n = static_cast<int>(source.points.size());
    long hits = 0;
    if constexpr (Parallel) {
#pragma omp parallel for schedule(static) reduction(+ : hits)
        for (int k = 0; k < n; ++k) {
            hits += grid.nearest(apply(t, source.points[k])) >= 0;
        }
    } else {
        for (int k = 0; k < n; ++k) {
            hits += grid.nearest(apply(t, source.points[k])) >= 0;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

RegistrationResult icp(const PointCloud2D& source, const PointCloud2D& target,
                       const Transform2& init, const IcpParams& p) {
    if (source.empty() || target.empty()) throw DegenerateError("icp: empty cloud");
    const NnGrid grid(target.points, p.match_radius);
    return icp_impl(source.points, grid, target.points, init, p);
}

RegistrationResult global_register(const PointCloud2D& source, const PointCloud2D& target,
                                   const GlobalRegParams& p) {
    return global_register_impl<true>(source, target, p);
}

RegistrationResult global_register_serial(const PointCloud2D& source, const PointCloud2D& target,
                                          const GlobalRegParams& p) {
    return global_register_impl<false>(source, target, p);
}

double overlap(const PointCloud2D& source, const PointCloud2D& target, const Transform2& t,
               double radius) {
    return overlap_impl<true>(source, target, t, radius);
}

double overlap_serial(const PointCloud2D& source, const PointCloud2D& target, const Transform2& t,
                      double radius) {
    return overlap_impl<false>(source, target, t, radius);
}

}  // namespace sonarfleet
