#include "sonarfleet/pcm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "sonarfleet/errors.hpp"

namespace sonarfleet {

namespace {

Mat3 rotate_cov(const Mat3& c, double theta) {
    Mat3 g = Mat3::Identity();
    const double co = std::cos(theta), si = std::sin(theta);
    g(0, 0) = co; g(0, 1) = -si;
    g(1, 0) = si; g(1, 1) = co;
    return g * c * g.transpose();
}

struct ChainLink {
    Transform2 t;
    Mat3 cov;
};

// Compose the cycle and accumulate each link's covariance rotated by the
// rotation of the chain prefix (first-order block transport).
double cycle_mahalanobis(const std::vector<ChainLink>& chain) {
    Pose2 acc = Pose2::identity();
    Mat3 sigma = Mat3::Zero();
    double prefix_rot = 0.0;
    for (const ChainLink& link : chain) {
        sigma += rotate_cov(link.cov, prefix_rot);
        acc = compose(acc, link.t);
        prefix_rot = acc.theta;
    }
    const Vec3 e = to_vec(acc);
    Eigen::LLT<Mat3> llt(sigma);
    if (llt.info() != Eigen::Success) throw NonSpdError("pcm: summed covariance not SPD");
    return e.dot(llt.solve(e));
}

// first-order covariance of an inverted edge: rotate by the inverse's rotation
ChainLink inverted(const Transform2& t, const Mat3& cov) {
    const Transform2 ti = inverse(t);
    return ChainLink{ti, rotate_cov(cov, ti.theta)};
}

}  // namespace

double pairwise_consistency(const LoopCandidate& l1, const LoopCandidate& l2,
                            const OdomEdge& odo_a, const OdomEdge& odo_b) {
    // canonical order makes d(l1, l2) bit-identical to d(l2, l1)
    const LoopCandidate* a = &l1;
    const LoopCandidate* b = &l2;
    OdomEdge oa = odo_a, ob = odo_b;
    const auto key = [](const LoopCandidate& l) {
        return std::make_tuple(l.src.robot, l.src.kf, l.dst.robot, l.dst.kf);
    };
    if (key(l2) < key(l1)) {
        std::swap(a, b);
        oa.relative = inverse(odo_a.relative);
        ob.relative = inverse(odo_b.relative);
    }
    // cycle: inv(z_a) * odoA * z_b * inv(odoB), ideally identity
    std::vector<ChainLink> chain;
    chain.reserve(4);
    chain.push_back(inverted(a->relative, a->covariance));
    chain.push_back(ChainLink{oa.relative, oa.covariance});
    chain.push_back(ChainLink{b->relative, b->covariance});
    chain.push_back(inverted(ob.relative, ob.covariance));
    return cycle_mahalanobis(chain);
}

namespace {

double matrix_entry(const std::vector<LoopCandidate>& cands, const OdomLookup& odom, std::size_t i,
                    std::size_t j) {
    const LoopCandidate& li = cands[i];
    const LoopCandidate& lj = cands[j];
    const OdomEdge oa = odom(li.src.robot, li.src.kf, lj.src.kf);
    const OdomEdge ob = odom(li.dst.robot, li.dst.kf, lj.dst.kf);
    return pairwise_consistency(li, lj, oa, ob);
}

template <bool Parallel>
std::vector<double> consistency_matrix_impl(const std::vector<LoopCandidate>& cands,
                                            const OdomLookup& odom) {
    const std::size_t n = cands.size();
    std::vector<double> dist(n * n, 0.0);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);

    const long m = static_cast<long>(pairs.size());
    if constexpr (Parallel) {
#pragma omp parallel for schedule(dynamic, 8)
        for (long k = 0; k < m; ++k) {
            const auto [i, j] = pairs[k];
            const double d = matrix_entry(cands, odom, i, j);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    } else {
        for (long k = 0; k < m; ++k) {
            const auto [i, j] = pairs[k];
            const double d = matrix_entry(cands, odom, i, j);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    return dist;
}

using Bits = std::vector<std::uint64_t>;

struct BitSet {
    Bits w;
    explicit BitSet(std::size_t n) : w((n + 63) / 64, 0) {}
    void set(std::size_t i) { w[i >> 6] |= (1ull << (i & 63)); }
    bool test(std::size_t i) const { return (w[i >> 6] >> (i & 63)) & 1; }
    bool empty() const {
        for (auto x : w)
            if (x) return false;
        return true;
    }
    std::size_t count() const {
        std::size_t c = 0;
        for (auto x : w) c += static_cast<std::size_t>(__builtin_popcountll(x));
        return c;
    }
};

BitSet and_sets(const BitSet& a, const BitSet& b) {
    BitSet r(a.w.size() * 64);
    r.w.resize(a.w.size());
    for (std::size_t k = 0; k < a.w.size(); ++k) r.w[k] = a.w[k] & b.w[k];
    return r;
}

// Bron-Kerbosch with pivoting, collecting every maximum-size clique.
struct CliqueSearch {
    std::size_t n;
    std::vector<BitSet> adj;
    std::vector<std::size_t> current;
    std::vector<std::vector<std::size_t>> best;  // all cliques of the best size

    void expand(BitSet p, BitSet x) {
        if (p.empty() && x.empty()) {
            if (best.empty() || current.size() > best[0].size()) {
                best.clear();
                best.push_back(current);
            } else if (current.size() == best[0].size()) {
                best.push_back(current);
            }
            return;
        }
        if (!best.empty() && current.size() + p.count() < best[0].size()) return;

        // pivot: vertex of P|X with the most neighbors in P
        std::size_t pivot = n;
        std::size_t pivot_deg = 0;
        for (std::size_t v = 0; v < n; ++v) {
            if (!p.test(v) && !x.test(v)) continue;
            const std::size_t deg = and_sets(p, adj[v]).count();
            if (pivot == n || deg > pivot_deg) {
                pivot = v;
                pivot_deg = deg;
            }
        }
        for (std::size_t v = 0; v < n; ++v) {
            if (!p.test(v) || adj[pivot].test(v)) continue;
            current.push_back(v);
            expand(and_sets(p, adj[v]), and_sets(x, adj[v]));
            current.pop_back();
            p.w[v >> 6] &= ~(1ull << (v & 63));
            x.set(v);
        }
    }
};

}  // namespace

std::vector<double> consistency_matrix(const std::vector<LoopCandidate>& cands,
                                       const OdomLookup& odom) {
    return consistency_matrix_impl<true>(cands, odom);
}

std::vector<double> consistency_matrix_serial(const std::vector<LoopCandidate>& cands,
                                              const OdomLookup& odom) {
    return consistency_matrix_impl<false>(cands, odom);
}

std::vector<std::size_t> pcm_select_matrix(const std::vector<double>& dist, std::size_t n,
                                           double threshold) {
    if (n == 0) return {};
    CliqueSearch cs;
    cs.n = n;
    cs.adj.assign(n, BitSet(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && dist[i * n + j] <= threshold) cs.adj[i].set(j);

    BitSet p(n), x(n);
    for (std::size_t i = 0; i < n; ++i) p.set(i);
    cs.expand(p, x);
    if (cs.best.empty()) return {};

    // ties: lower total pairwise Mahalanobis sum, then lexicographic indices
    for (auto& clique : cs.best) std::sort(clique.begin(), clique.end());
    std::sort(cs.best.begin(), cs.best.end());
    std::size_t winner = 0;
    double winner_sum = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cs.best.size(); ++c) {
        double sum = 0.0;
        const auto& q = cs.best[c];
        for (std::size_t i = 0; i < q.size(); ++i)
            for (std::size_t j = i + 1; j < q.size(); ++j) sum += dist[q[i] * n + q[j]];
        if (sum < winner_sum) {
            winner_sum = sum;
            winner = c;
        }
    }
    return cs.best[winner];
}

std::vector<std::size_t> pcm_select(const std::vector<LoopCandidate>& cands,
                                    const OdomLookup& odom, double threshold) {
    if (cands.empty()) return {};
    const std::vector<double> dist = consistency_matrix(cands, odom);
    return pcm_select_matrix(dist, cands.size(), threshold);
}

}  // namespace sonarfleet
