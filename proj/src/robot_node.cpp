#include "sonarfleet/robot_node.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "sonarfleet/errors.hpp"

namespace sonarfleet {

namespace {

std::array<float, 3> pose_to_f32(const Pose2& p) {
    return {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.theta)};
}

Pose2 pose_from_f32(const std::array<float, 3>& a) { return Pose2(a[0], a[1], a[2]); }

}  // namespace

RobotNode::RobotNode(int id, const NodeConfig& cfg, Channel* channel)
    : id_(id), cfg_(cfg), channel_(channel), graph_(id) {}

Mat3 RobotNode::registration_covariance(double rmse) const {
    const double base = std::max(rmse, cfg_.reg_sigma_floor);
    const double sxy = base * cfg_.reg_sigma_scale_xy;
    const double sth = base * cfg_.reg_sigma_scale_theta;
    return Vec3(sxy * sxy, sxy * sxy, sth * sth).asDiagonal();
}

Mat3 RobotNode::odom_chain_covariance(std::int64_t kf_a, std::int64_t kf_b) const {
    const double steps = std::max<std::int64_t>(std::llabs(kf_b - kf_a), 1);
    return steps * cfg_.odom_covariance;
}

OdomLookup RobotNode::make_odom_lookup(int partner) const {
    return [this, partner](int robot, std::int64_t kf_a, std::int64_t kf_b) -> OdomEdge {
        OdomEdge e;
        e.covariance = odom_chain_covariance(kf_a, kf_b);
        if (robot == id_) {
            e.relative = between(graph_.pose(KfKey{id_, kf_a}), graph_.pose(KfKey{id_, kf_b}));
        } else {
            const auto& poses = partners_.at(partner).poses;
            e.relative = between(poses.at(kf_a), poses.at(kf_b));
        }
        return e;
    };
}

void RobotNode::tick(std::int64_t tick_index, double t, const PolarImage& scan,
                     const Pose2& dead_reckoning) {
    // 1: sensing front end
    DetectionMask mask;
    PointCloud2D cloud;
    try {
        mask = cfar_detect(scan, cfg_.cfar);
        cloud = downsample_medoid(mask_to_cloud(mask, scan), cfg_.frontend_voxel);
    } catch (const std::exception&) {
        ++stats_.dropped_errors;
    }

    // 2: keyframe decision from dead reckoning
    const bool keyframe =
        !has_last_kf_ || maybe_add_keyframe(between(dr_last_kf_, dead_reckoning), cfg_.keyframe);
    if (keyframe) handle_keyframe(tick_index, t, cloud, mask, dead_reckoning);

    // 3: message pool
    drain_messages(t);

    // re-solve when message handling touched the graph
    if (graph_dirty_) optimize();

    // 4: pose re-send on significant corrections
    maybe_resend(t);
}

void RobotNode::handle_keyframe(std::int64_t tick_index, double t, const PointCloud2D& cloud,
                                const DetectionMask& mask, const Pose2& dead_reckoning) {
    const std::int64_t kf = next_kf_++;
    PointCloud2D kf_cloud = cloud;
    kf_cloud.frame = kf;
    kf_clouds_[kf] = kf_cloud;
    kf_descriptors_[kf] = make_descriptor(kf_cloud, cfg_.sonar_max_range);
    kf_images_[kf] = make_scene_image(kf_cloud, cfg_.scene_cell, cfg_.sonar_max_range);
    kf_ticks_[kf] = tick_index;
    ++stats_.keyframes;

    if (!cfg_.dump_mask_dir.empty()) {
        write_mask_pgm(mask, cfg_.dump_mask_dir + "/mask_r" + std::to_string(id_) + "_kf" +
                                 std::to_string(kf) + ".pgm");
    }

    if (kf == 0) {
        Factor prior;
        prior.kind = FactorKind::Prior;
        prior.a = KfKey{id_, 0};
        prior.measurement = dead_reckoning;
        prior.covariance =
            Vec3(cfg_.prior_sigma * cfg_.prior_sigma, cfg_.prior_sigma * cfg_.prior_sigma,
                 cfg_.prior_sigma * cfg_.prior_sigma)
                .asDiagonal();
        graph_.add_factor(prior);
    } else {
        const Transform2 odo = between(dr_last_kf_, dead_reckoning);
        Factor odom;
        odom.kind = FactorKind::Odom;
        odom.a = KfKey{id_, kf - 1};
        odom.b = KfKey{id_, kf};
        odom.measurement = odo;
        odom.covariance = cfg_.odom_covariance;
        graph_.add_factor(odom);

        // sequential scan matching seeded by dead reckoning
        const PointCloud2D& prev = kf_clouds_.at(kf - 1);
        if (!prev.empty() && !kf_cloud.empty()) {
            try {
                const RegistrationResult ssm = icp(kf_cloud, prev, odo, cfg_.icp);
                if (ssm.converged && ssm.rmse <= cfg_.ssm_max_rmse) {
                    Factor f;
                    f.kind = FactorKind::Ssm;
                    f.a = KfKey{id_, kf - 1};
                    f.b = KfKey{id_, kf};
                    f.measurement = ssm.transform;
                    f.covariance = registration_covariance(ssm.rmse);
                    graph_.add_factor(f);
                    ++stats_.ssm_factors;
                }
            } catch (const std::exception&) {
                ++stats_.dropped_errors;
            }
        }

        try_nssm(kf);
    }

    tree_.insert(kf, kf_descriptors_.at(kf));
    dr_last_kf_ = dead_reckoning;
    has_last_kf_ = true;

    optimize();

    DescriptorMsg d;
    d.sender = static_cast<std::uint8_t>(id_);
    d.keyframe = static_cast<std::uint16_t>(kf);
    const Pose2 est = graph_.pose(KfKey{id_, kf});
    d.pose = pose_to_f32(est);
    d.histogram = kf_descriptors_.at(kf).bins;
    channel_->broadcast(NetMessage{d}, t);
    last_broadcast_[kf] = pose_from_f32(d.pose);
}

void RobotNode::try_nssm(std::int64_t kf) {
    const PointCloud2D& cloud = kf_clouds_.at(kf);
    if (cloud.empty()) return;
    const auto hits = tree_.query(kf_descriptors_.at(kf), cfg_.tree_max_dist, cfg_.tree_k + 1);
    int tried = 0;
    for (const DescriptorMatch& h : hits) {
        if (std::llabs(kf - h.id) < cfg_.nssm_min_gap) continue;
        if (tried++ >= cfg_.nssm_candidates) break;
        const std::int64_t other = h.id;
        const PointCloud2D& target = kf_clouds_.at(other);
        if (target.empty()) continue;
        try {
            const Transform2 init =
                between(graph_.pose(KfKey{id_, other}), graph_.pose(KfKey{id_, kf}));
            const RegistrationResult reg = icp(cloud, target, init, cfg_.icp);
            if (!reg.converged) continue;
            const double ovl = overlap(cloud, target, reg.transform, cfg_.overlap_radius);
            if (ovl < cfg_.gates.min_overlap) continue;
            LoopCandidate cand;
            cand.src = KfKey{id_, other};
            cand.dst = KfKey{id_, kf};
            cand.relative = reg.transform;
            cand.covariance = registration_covariance(reg.rmse);
            cand.overlap = ovl;
            cand.rmse = reg.rmse;
            if (nssm_pool_.size() >= cfg_.pcm_pool_cap) continue;
            nssm_pool_.push_back(cand);

            const auto selected = pcm_select(nssm_pool_, make_odom_lookup(id_),
                                             cfg_.gates.pcm_threshold);
            for (std::size_t idx : selected) {
                if (nssm_accepted_.count(idx)) continue;
                const LoopCandidate& c = nssm_pool_[idx];
                Factor f;
                f.kind = FactorKind::Nssm;
                f.a = c.src;
                f.b = c.dst;
                f.measurement = c.relative;
                f.covariance = c.covariance;
                try {
                    graph_.add_factor(f);
                    graph_dirty_ = true;
                    nssm_accepted_.insert(idx);
                    ++stats_.nssm_factors;
                } catch (const DuplicateFactorError&) {
                    nssm_accepted_.insert(idx);
                }
            }
        } catch (const std::exception&) {
            ++stats_.dropped_errors;
        }
    }
}

void RobotNode::drain_messages(double t) {
    for (const NetMessage& m : channel_->drain(id_)) {
        try {
            switch (m.variant()) {
                case MsgVariant::Descriptor:
                    handle_descriptor(std::get<DescriptorMsg>(m.payload), t);
                    break;
                case MsgVariant::CloudRequest:
                    handle_cloud_request(std::get<CloudRequestMsg>(m.payload), t);
                    break;
                case MsgVariant::Cloud:
                    handle_cloud(std::get<CloudMsg>(m.payload), t);
                    break;
                case MsgVariant::Loop:
                    handle_loop(std::get<LoopMsg>(m.payload));
                    break;
                case MsgVariant::PoseUpdate:
                    handle_pose_update(std::get<PoseUpdateMsg>(m.payload));
                    break;
            }
        } catch (const std::exception&) {
            ++stats_.dropped_errors;
        }
    }
    retry_pending_loops();
}

void RobotNode::handle_descriptor(const DescriptorMsg& d, double t) {
    const int p = d.sender;
    PartnerState& ps = partners_[p];
    ps.poses[d.keyframe] = pose_from_f32(d.pose);
    if (!ps.pr_active && partner_has_ir(p)) ps.pr_active = true;
    if (ps.pr_active) ensure_pr_chain(p);

    SceneDescriptor desc;
    desc.bins = d.histogram;
    desc.bin_width = cfg_.sonar_max_range / 16.0;
    const auto hits = tree_.query(desc, cfg_.tree_max_dist, cfg_.tree_k);
    if (hits.empty()) return;
    const auto key = std::make_pair(p, static_cast<std::int64_t>(d.keyframe));
    if (requested_.count(key)) return;
    requested_.insert(key);
    std::vector<std::int64_t>& mine = pending_hits_[key];
    for (const DescriptorMatch& h : hits) mine.push_back(h.id);

    CloudRequestMsg req;
    req.sender = static_cast<std::uint8_t>(id_);
    req.target = static_cast<std::uint8_t>(p);
    req.keyframe = d.keyframe;
    channel_->broadcast(NetMessage{req}, t);
}

void RobotNode::handle_cloud_request(const CloudRequestMsg& r, double t) {
    if (r.target != id_) return;
    auto it = kf_clouds_.find(r.keyframe);
    if (it == kf_clouds_.end()) return;
    // the cloud is broadcast, so one send serves every requester
    if (served_clouds_.count(r.keyframe)) return;
    served_clouds_.insert(r.keyframe);
    CloudMsg c;
    c.sender = static_cast<std::uint8_t>(id_);
    c.keyframe = r.keyframe;
    c.compressed = cfg_.use_compression;
    if (cfg_.use_compression) {
        c.cloud = compress(it->second, cfg_.compression_voxel);
    } else {
        c.raw.reserve(it->second.points.size());
        for (const Point2& pt : it->second.points)
            c.raw.push_back({static_cast<float>(pt.x), static_cast<float>(pt.y)});
    }
    channel_->broadcast(NetMessage{c}, t);
}

void RobotNode::handle_cloud(const CloudMsg& c, double t) {
    const int p = c.sender;
    const auto key = std::make_pair(p, static_cast<std::int64_t>(c.keyframe));

    PointCloud2D cloud;
    if (c.compressed) {
        cloud = decompress(c.cloud);
    } else {
        cloud.points.reserve(c.raw.size());
        for (const auto& q : c.raw)
            cloud.points.push_back(Point2{static_cast<double>(q[0]), static_cast<double>(q[1])});
    }
    cloud.frame = c.keyframe;
    partners_[p].clouds[c.keyframe] = cloud;

    auto hit_it = pending_hits_.find(key);
    if (hit_it == pending_hits_.end()) return;  // someone else's request
    const std::vector<std::int64_t> own_kfs = hit_it->second;
    pending_hits_.erase(hit_it);
    for (std::int64_t own_kf : own_kfs) {
        try {
            process_ir_candidate(own_kf, p, c.keyframe, t);
        } catch (const std::exception&) {
            ++stats_.dropped_errors;
        }
    }
}

void RobotNode::process_ir_candidate(std::int64_t own_kf, int partner, std::int64_t partner_kf,
                                     double t) {
    PartnerState& ps = partners_.at(partner);
    const PointCloud2D& theirs = ps.clouds.at(partner_kf);
    const PointCloud2D& mine = kf_clouds_.at(own_kf);
    ++stats_.candidates_evaluated;

    CandidateRecord rec;
    rec.own_kf = own_kf;
    rec.partner = partner;
    rec.partner_kf = partner_kf;
    rec.n_partner = theirs.size();
    rec.n_own = mine.size();

    const SceneImage their_img = make_scene_image(theirs, cfg_.scene_cell, cfg_.sonar_max_range);
    const SceneImage& my_img = kf_images_.at(own_kf);
    rec.sad = scene_sad(their_img, my_img);

    const GateResult pre = gate_pre(theirs, mine, their_img, my_img, cfg_.gates);
    if (!pre.pass) {
        candidate_log_.push_back(rec);
        return;
    }

    RegistrationResult reg;
    try {
        reg = global_register(theirs, mine, cfg_.global_reg);
    } catch (const DegenerateError&) {
        candidate_log_.push_back(rec);
        return;
    }
    rec.registered = true;
    rec.transform = reg.transform;
    rec.rmse = reg.rmse;
    rec.overlap = overlap(theirs, mine, reg.transform, cfg_.overlap_radius);

    const GateResult post = gate_post(reg, rec.overlap, cfg_.gates);
    if (!post.pass) {
        candidate_log_.push_back(rec);
        return;
    }

    LoopCandidate cand;
    cand.src = KfKey{id_, own_kf};
    cand.dst = KfKey{partner, partner_kf};
    cand.relative = reg.transform;
    cand.covariance = registration_covariance(reg.rmse);
    cand.overlap = rec.overlap;
    cand.rmse = reg.rmse;
    if (ps.pool.size() >= cfg_.pcm_pool_cap) {
        candidate_log_.push_back(rec);
        return;
    }
    ps.pool.push_back(cand);

    if (!cfg_.use_pcm) {
        rec.accepted = true;
        candidate_log_.push_back(rec);
        accept_candidate(partner, ps.pool.size() - 1, t);
        return;
    }
    candidate_log_.push_back(rec);
    run_pcm_and_accept(partner, t);
}

void RobotNode::run_pcm_and_accept(int partner, double t) {
    PartnerState& ps = partners_.at(partner);
    const auto selected =
        pcm_select(ps.pool, make_odom_lookup(partner), cfg_.gates.pcm_threshold);
    for (std::size_t idx : selected) {
        if (ps.accepted.count(idx)) continue;
        accept_candidate(partner, idx, t);
        // mark the matching record as accepted
        for (auto it = candidate_log_.rbegin(); it != candidate_log_.rend(); ++it) {
            if (it->partner == partner && it->own_kf == ps.pool[idx].src.kf &&
                it->partner_kf == ps.pool[idx].dst.kf) {
                it->accepted = true;
                break;
            }
        }
    }
}

void RobotNode::accept_candidate(int partner, std::size_t pool_index, double t) {
    PartnerState& ps = partners_.at(partner);
    if (ps.accepted.count(pool_index)) return;
    const LoopCandidate& c = ps.pool[pool_index];
    Factor f;
    f.kind = FactorKind::InterRobot;
    f.a = c.src;
    f.b = c.dst;
    f.measurement = c.relative;
    f.covariance = c.covariance;
    try {
        graph_.add_factor(f);
        graph_dirty_ = true;
    } catch (const DuplicateFactorError&) {
        ps.accepted.insert(pool_index);
        return;
    }
    ps.accepted.insert(pool_index);
    ++stats_.ir_factors;
    ps.pr_active = true;
    ensure_pr_chain(partner);

    LoopMsg msg;
    msg.robot_a = static_cast<std::uint8_t>(id_);
    msg.keyframe_a = static_cast<std::uint16_t>(c.src.kf);
    msg.robot_b = static_cast<std::uint8_t>(partner);
    msg.keyframe_b = static_cast<std::uint16_t>(c.dst.kf);
    msg.transform = pose_to_f32(c.relative);
    msg.cov_diagonal = {static_cast<float>(c.covariance(0, 0)),
                        static_cast<float>(c.covariance(1, 1)),
                        static_cast<float>(c.covariance(2, 2))};
    channel_->broadcast(NetMessage{msg}, t);
}

void RobotNode::handle_loop(const LoopMsg& l) {
    Factor f;
    f.kind = FactorKind::InterRobot;
    f.a = KfKey{l.robot_a, l.keyframe_a};
    f.b = KfKey{l.robot_b, l.keyframe_b};
    f.measurement = Pose2(l.transform[0], l.transform[1], l.transform[2]);
    f.covariance = Vec3(l.cov_diagonal[0], l.cov_diagonal[1], l.cov_diagonal[2]).asDiagonal();
    try {
        graph_.add_factor(f);
        graph_dirty_ = true;
        ++stats_.ir_factors;
    } catch (const DuplicateFactorError&) {
        return;
    } catch (const SingularSystemError&) {
        pending_loops_.push_back(l);  // neither endpoint known yet
        return;
    }
    const int other = l.robot_a == id_ ? l.robot_b : l.robot_a;
    if (other != id_ && partners_.count(other)) {
        partners_.at(other).pr_active = true;
        ensure_pr_chain(other);
    }
    // a loop between two partners anchors them both
    if (l.robot_a != id_ && l.robot_b != id_) {
        for (int r : {static_cast<int>(l.robot_a), static_cast<int>(l.robot_b)}) {
            if (partners_.count(r)) {
                partners_.at(r).pr_active = true;
                ensure_pr_chain(r);
            }
        }
    }
}

void RobotNode::retry_pending_loops() {
    if (pending_loops_.empty()) return;
    std::vector<LoopMsg> still;
    for (const LoopMsg& l : pending_loops_) {
        const bool known = graph_.has_pose(KfKey{l.robot_a, l.keyframe_a}) ||
                           graph_.has_pose(KfKey{l.robot_b, l.keyframe_b});
        if (known) {
            handle_loop(l);
        } else {
            still.push_back(l);
        }
    }
    pending_loops_ = std::move(still);
}

void RobotNode::handle_pose_update(const PoseUpdateMsg& u) {
    const int p = u.sender;
    PartnerState& ps = partners_[p];
    for (const auto& e : u.poses) {
        ps.poses[e.keyframe] = pose_from_f32(e.pose);
        if (ps.pr_active) refresh_pr_edges(p, e.keyframe);
    }
    if (ps.pr_active) ensure_pr_chain(p);
}

void RobotNode::ensure_pr_chain(int partner) {
    PartnerState& ps = partners_.at(partner);
    if (!ps.pr_active || ps.poses.size() < 2) return;
    bool progress = true;
    while (progress) {
        progress = false;
        auto it = ps.poses.begin();
        auto next = std::next(it);
        for (; next != ps.poses.end(); ++it, ++next) {
            const std::int64_t a = it->first, b = next->first;
            if (ps.pr_edges.count(a)) continue;
            Factor f;
            f.kind = FactorKind::PartnerRobot;
            f.a = KfKey{partner, a};
            f.b = KfKey{partner, b};
            f.measurement = between(it->second, next->second);
            f.covariance =
                Vec3(cfg_.pr_sigma_xy * cfg_.pr_sigma_xy, cfg_.pr_sigma_xy * cfg_.pr_sigma_xy,
                     cfg_.pr_sigma_theta * cfg_.pr_sigma_theta)
                    .asDiagonal();
            try {
                ps.pr_edges[a] = graph_.add_factor(f);
                graph_dirty_ = true;
                ++stats_.pr_factors;
                progress = true;
            } catch (const SingularSystemError&) {
                // neither endpoint reachable yet; a later edge may anchor it
            } catch (const DuplicateFactorError&) {
                ps.pr_edges[a] = static_cast<std::size_t>(-1);
            }
        }
    }
}

void RobotNode::refresh_pr_edges(int partner, std::int64_t kf) {
    PartnerState& ps = partners_.at(partner);
    const Mat3 cov =
        Vec3(cfg_.pr_sigma_xy * cfg_.pr_sigma_xy, cfg_.pr_sigma_xy * cfg_.pr_sigma_xy,
             cfg_.pr_sigma_theta * cfg_.pr_sigma_theta)
            .asDiagonal();
    // edges (prev -> kf) and (kf -> next)
    auto it = ps.poses.find(kf);
    if (it == ps.poses.end()) return;
    if (it != ps.poses.begin()) {
        auto prev = std::prev(it);
        auto e = ps.pr_edges.find(prev->first);
        if (e != ps.pr_edges.end() && e->second != static_cast<std::size_t>(-1)) {
            graph_.update_measurement(e->second, between(prev->second, it->second), cov);
            graph_dirty_ = true;
        }
    }
    auto next = std::next(it);
    if (next != ps.poses.end()) {
        auto e = ps.pr_edges.find(kf);
        if (e != ps.pr_edges.end() && e->second != static_cast<std::size_t>(-1)) {
            graph_.update_measurement(e->second, between(it->second, next->second), cov);
            graph_dirty_ = true;
        }
    }
}

void RobotNode::maybe_resend(double t) {
    if (!cfg_.resend_enabled || last_broadcast_.empty()) return;
    std::map<KfKey, Pose2> before, after;
    for (const auto& [kf, p] : last_broadcast_) {
        const KfKey key{id_, kf};
        if (!graph_.has_pose(key)) continue;
        before[key] = p;
        after[key] = graph_.pose(key);
    }
    const auto changed =
        changed_poses(before, after, cfg_.resend_translation, cfg_.resend_rotation);
    if (changed.empty()) return;
    PoseUpdateMsg u;
    u.sender = static_cast<std::uint8_t>(id_);
    for (const PoseDelta& d : changed) {
        PoseUpdateMsg::Entry e;
        e.keyframe = static_cast<std::uint16_t>(d.key.kf);
        e.pose = pose_to_f32(d.pose);
        u.poses.push_back(e);
        last_broadcast_[d.key.kf] = pose_from_f32(e.pose);
    }
    channel_->broadcast(NetMessage{u}, t);
}

void RobotNode::optimize() {
    try {
        graph_.optimize();
    } catch (const std::exception&) {
        ++stats_.dropped_errors;
    }
    graph_dirty_ = false;
}

bool RobotNode::partner_has_ir(int partner) const {
    for (const Factor& f : graph_.factors()) {
        if (f.kind == FactorKind::InterRobot &&
            (f.a.robot == partner || f.b.robot == partner))
            return true;
    }
    return false;
}

std::size_t RobotNode::ir_factor_count() const {
    std::size_t n = 0;
    for (const Factor& f : graph_.factors()) n += (f.kind == FactorKind::InterRobot);
    return n;
}

std::vector<RobotNode::MergedPoint> RobotNode::merge_maps() const {
    std::vector<MergedPoint> out;
    for (const auto& [kf, cloud] : kf_clouds_) {
        const KfKey key{id_, kf};
        if (!graph_.has_pose(key)) continue;
        const PointCloud2D placed = transform_cloud(graph_.pose(key), cloud);
        for (const Point2& p : placed.points) out.push_back(MergedPoint{p.x, p.y, id_, kf});
    }
    for (const auto& [partner, ps] : partners_) {
        for (const auto& [kf, cloud] : ps.clouds) {
            const KfKey key{partner, kf};
            if (!graph_.has_pose(key)) continue;
            const PointCloud2D placed = transform_cloud(graph_.pose(key), cloud);
            for (const Point2& p : placed.points)
                out.push_back(MergedPoint{p.x, p.y, partner, kf});
        }
    }
    return out;
}

}  // namespace sonarfleet
