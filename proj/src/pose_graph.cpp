#include "sonarfleet/pose_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "sonarfleet/errors.hpp"

namespace sonarfleet {

const char* factor_kind_name(FactorKind k) {
    switch (k) {
        case FactorKind::Prior: return "prior";
        case FactorKind::Odom: return "odom";
        case FactorKind::Ssm: return "ssm";
        case FactorKind::Nssm: return "nssm";
        case FactorKind::InterRobot: return "ir";
        case FactorKind::PartnerRobot: return "pr";
    }
    return "?";
}

bool maybe_add_keyframe(const Transform2& d, const KeyframePolicy& policy) {
    return std::hypot(d.x, d.y) >= policy.min_translation ||
           std::abs(wrap_angle(d.theta)) >= policy.min_rotation;
}

Vec3 factor_residual(const Factor& f, const std::map<KfKey, Pose2>& poses) {
    if (f.binary()) {
        const Pose2 d = between(poses.at(f.a), poses.at(f.b));
        return to_vec(compose(inverse(f.measurement), d));
    }
    return to_vec(compose(inverse(f.measurement), poses.at(f.a)));
}

void factor_jacobians(const Factor& f, const std::map<KfKey, Pose2>& poses, Mat3& da, Mat3& db) {
    const double tz = f.measurement.theta;
    Eigen::Matrix2d rzt;
    rzt << std::cos(tz), std::sin(tz), -std::sin(tz), std::cos(tz);  // R(tz)^T
    if (!f.binary()) {
        da.setZero();
        da.block<2, 2>(0, 0) = rzt;
        da(2, 2) = 1.0;
        db.setZero();
        return;
    }
    const Pose2& pa = poses.at(f.a);
    const Pose2& pb = poses.at(f.b);
    const double ca = std::cos(pa.theta), sa = std::sin(pa.theta);
    Eigen::Matrix2d rat;
    rat << ca, sa, -sa, ca;  // R(ta)^T
    Eigen::Matrix2d drat;    // d/dtheta R(ta)^T
    drat << -sa, ca, -ca, -sa;
    const Eigen::Vector2d dt(pb.x - pa.x, pb.y - pa.y);

    da.setZero();
    da.block<2, 2>(0, 0) = -rzt * rat;
    da.block<2, 1>(0, 2) = rzt * (drat * dt);
    da(2, 2) = -1.0;

    db.setZero();
    db.block<2, 2>(0, 0) = rzt * rat;
    db(2, 2) = 1.0;
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

std::uint64_t hash_double(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    return mix64(u);
}

std::uint64_t factor_hash(const Factor& f) {
    std::uint64_t h = mix64(static_cast<std::uint64_t>(f.kind) + 0x9e3779b97f4a7c15ULL);
    auto add = [&h](std::uint64_t v) { h = mix64(h ^ v); };
    add(static_cast<std::uint64_t>(f.a.robot));
    add(static_cast<std::uint64_t>(f.a.kf));
    add(static_cast<std::uint64_t>(f.b.robot));
    add(static_cast<std::uint64_t>(f.b.kf));
    add(hash_double(f.measurement.x));
    add(hash_double(f.measurement.y));
    add(hash_double(f.measurement.theta));
    return h;
}

Mat3 sqrt_information(const Mat3& cov) {
    Eigen::LLT<Mat3> llt(cov);
    if (llt.info() != Eigen::Success) throw NonSpdError("factor covariance not SPD");
    // cov = L L^T  =>  whitener W = L^-1, W^T W = cov^-1
    Mat3 w = Mat3::Identity();
    llt.matrixL().solveInPlace(w);
    return w;
}

}  // namespace

std::size_t GraphState::add_factor(const Factor& f) {
    const std::uint64_t h = factor_hash(f);
    if (factor_hashes_.count(h))
        throw DuplicateFactorError("duplicate factor " + std::string(factor_kind_name(f.kind)));

    if (!f.binary()) {
        if (!has_pose(f.a)) poses_[f.a] = f.measurement;
    } else {
        const bool ha = has_pose(f.a), hb = has_pose(f.b);
        if (!ha && !hb)
            throw SingularSystemError("factor with two unknown endpoints cannot be initialized");
        if (!hb) poses_[f.b] = compose(poses_.at(f.a), f.measurement);
        if (!ha) poses_[f.a] = compose(poses_.at(f.b), inverse(f.measurement));
    }
    factor_hashes_.insert(h);
    factors_.push_back(f);
    return factors_.size() - 1;
}

void GraphState::update_measurement(std::size_t index, const Transform2& measurement,
                                    const Mat3& covariance) {
    Factor& f = factors_.at(index);
    factor_hashes_.erase(factor_hash(f));
    f.measurement = measurement;
    f.covariance = covariance;
    factor_hashes_.insert(factor_hash(f));
}

double GraphState::chi2() const {
    double sum = 0.0;
    for (const Factor& f : factors_) {
        const Vec3 r = factor_residual(f, poses_);
        const Mat3 w = sqrt_information(f.covariance);
        sum += (w * r).squaredNorm();
    }
    return sum;
}

namespace {

double chi2_subset(const std::vector<const Factor*>& fs, const std::vector<Mat3>& whiteners,
                   const std::map<KfKey, Pose2>& poses) {
    double sum = 0.0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
        const Vec3 r = factor_residual(*fs[i], poses);
        sum += (whiteners[i] * r).squaredNorm();
    }
    return sum;
}

}  // namespace

OptimizeResult GraphState::optimize(const OptimizeOptions& opts) {
    OptimizeResult out;

    // connected component of the prior(s) through factor adjacency
    std::map<KfKey, KfKey> parent;
    std::function<KfKey(KfKey)> find = [&](KfKey k) {
        while (parent.at(k) != k) {
            parent[k] = parent.at(parent.at(k));
            k = parent.at(k);
        }
        return k;
    };
    for (const auto& [k, p] : poses_) {
        (void)p;
        parent[k] = k;
    }
    for (const Factor& f : factors_) {
        if (!f.binary()) continue;
        const KfKey ra = find(f.a), rb = find(f.b);
        if (!(ra == rb)) parent[ra] = rb;
    }
    std::set<KfKey> anchored_roots;
    for (const Factor& f : factors_) {
        if (f.kind == FactorKind::Prior) anchored_roots.insert(find(f.a));
    }
    if (anchored_roots.empty())
        throw SingularSystemError("optimize: no prior factor, gauge not fixed");

    std::vector<KfKey> keys;
    for (const auto& [k, p] : poses_) {
        (void)p;
        if (anchored_roots.count(find(k)))
            keys.push_back(k);
        else
            out.untouched.push_back(k);
    }

    std::map<KfKey, int> index;
    for (std::size_t i = 0; i < keys.size(); ++i) index[keys[i]] = static_cast<int>(i);

    std::vector<const Factor*> active;
    for (const Factor& f : factors_) {
        if (index.count(f.a) || (f.binary() && index.count(f.b))) active.push_back(&f);
    }
    std::vector<Mat3> whiteners;
    whiteners.reserve(active.size());
    for (const Factor* f : active) whiteners.push_back(sqrt_information(f->covariance));

    const int n = static_cast<int>(keys.size()) * 3;
    double chi2_cur = chi2_subset(active, whiteners, poses_);
    out.chi2_sequence.push_back(chi2_cur);

    double lambda = 1e-6;
    const double lambda_min = 1e-12, lambda_max = 1e12;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        // assemble damped normal equations from whitened blocks
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(active.size() * 36);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        for (std::size_t fi = 0; fi < active.size(); ++fi) {
            const Factor& f = *active[fi];
            const Mat3& w = whiteners[fi];
            const Vec3 rw = w * factor_residual(f, poses_);
            Mat3 da, db;
            factor_jacobians(f, poses_, da, db);
            const Mat3 ja = w * da;
            const int ia = index.at(f.a) * 3;
            const Mat3 haa = ja.transpose() * ja;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) trips.emplace_back(ia + r, ia + c, haa(r, c));
            rhs.segment<3>(ia) -= ja.transpose() * rw;
            if (f.binary()) {
                const Mat3 jb = w * db;
                const int ib = index.at(f.b) * 3;
                const Mat3 hbb = jb.transpose() * jb;
                const Mat3 hab = ja.transpose() * jb;
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c) {
                        trips.emplace_back(ib + r, ib + c, hbb(r, c));
                        trips.emplace_back(ia + r, ib + c, hab(r, c));
                        trips.emplace_back(ib + r, ia + c, hab(c, r));
                    }
                rhs.segment<3>(ib) -= jb.transpose() * rw;
            }
        }

        Eigen::SparseMatrix<double> h(n, n);
        h.setFromTriplets(trips.begin(), trips.end());
        Eigen::VectorXd hdiag = h.diagonal();

        bool stepped = false;
        for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
            Eigen::SparseMatrix<double> hd = h;
            for (int i = 0; i < n; ++i)
                hd.coeffRef(i, i) = hdiag[i] + lambda * std::max(hdiag[i], 1e-12);
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(hd);
            if (solver.info() == Eigen::Success) {
                const Eigen::VectorXd dx = solver.solve(rhs);
                if (solver.info() == Eigen::Success && dx.allFinite()) {
                    std::map<KfKey, Pose2> trial = poses_;
                    for (std::size_t i = 0; i < keys.size(); ++i) {
                        Pose2& p = trial.at(keys[i]);
                        p.x += dx[i * 3 + 0];
                        p.y += dx[i * 3 + 1];
                        p.theta = wrap_angle(p.theta + dx[i * 3 + 2]);
                    }
                    const double chi2_new = chi2_subset(active, whiteners, trial);
                    if (chi2_new <= chi2_cur) {
                        poses_ = std::move(trial);
                        const double drop = chi2_cur - chi2_new;
                        chi2_cur = chi2_new;
                        out.chi2_sequence.push_back(chi2_cur);
                        ++out.iterations;
                        lambda = std::max(lambda / 10.0, lambda_min);
                        stepped = true;
                        if (drop < opts.rel_tol * std::max(chi2_cur, 1.0) || chi2_cur == 0.0) {
                            out.converged = true;
                            return out;
                        }
                        break;
                    }
                }
            }
            lambda *= 10.0;
            if (lambda > lambda_max) break;
        }
        if (!stepped) {
            if (out.iterations == 0 && lambda > lambda_max)
                throw SingularSystemError("optimize: normal equations not solvable");
            out.converged = true;  // no admissible step left; at a local minimum
            return out;
        }
    }
    return out;
}

std::vector<PoseDelta> changed_poses(const std::map<KfKey, Pose2>& before,
                                     const std::map<KfKey, Pose2>& after, double threshold_t,
                                     double threshold_r) {
    std::vector<PoseDelta> out;
    for (const auto& [k, pb] : before) {
        auto it = after.find(k);
        if (it == after.end()) continue;
        const Pose2& pa = it->second;
        const double dt = std::hypot(pa.x - pb.x, pa.y - pb.y);
        const double dr = std::abs(wrap_angle(pa.theta - pb.theta));
        if (dt >= threshold_t || dr >= threshold_r) out.push_back(PoseDelta{k, pa});
    }
    return out;
}

void GraphState::write_g2o(const std::string& path) const {
    std::ofstream f(path);
    f.setf(std::ios::fmtflags(0), std::ios::floatfield);
    f.precision(12);
    for (const auto& [k, p] : poses_) {
        f << "VERTEX_SE2 " << k.robot << ":" << k.kf << " " << p.x << " " << p.y << " " << p.theta
          << "\n";
    }
    for (const Factor& f2 : factors_) {
        const Mat3 info = f2.covariance.inverse();
        if (f2.kind == FactorKind::Prior) {
            f << "# PRIOR_SE2 " << f2.a.robot << ":" << f2.a.kf << " " << f2.measurement.x << " "
              << f2.measurement.y << " " << f2.measurement.theta << "\n";
            continue;
        }
        f << "EDGE_SE2 " << f2.a.robot << ":" << f2.a.kf << " " << f2.b.robot << ":" << f2.b.kf
          << " " << f2.measurement.x << " " << f2.measurement.y << " " << f2.measurement.theta;
        // upper-triangular information, g2o order
        f << " " << info(0, 0) << " " << info(0, 1) << " " << info(0, 2) << " " << info(1, 1)
          << " " << info(1, 2) << " " << info(2, 2);
        f << " # " << factor_kind_name(f2.kind) << "\n";
    }
}

}  // namespace sonarfleet
