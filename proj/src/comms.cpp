#include "sonarfleet/comms.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "sonarfleet/errors.hpp"
#include "sonarfleet/wire.hpp"

namespace sonarfleet {

const char* msg_variant_name(MsgVariant v) {
    switch (v) {
        case MsgVariant::Descriptor: return "descriptor";
        case MsgVariant::CloudRequest: return "cloud_request";
        case MsgVariant::Cloud: return "cloud";
        case MsgVariant::Loop: return "loop";
        case MsgVariant::PoseUpdate: return "pose_update";
    }
    return "?";
}

int NetMessage::sender() const {
    return std::visit(
        [](const auto& p) -> int {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LoopMsg>)
                return p.robot_a;
            else
                return p.sender;
        },
        payload);
}

namespace {

void check_u16(std::size_t v, const char* what) {
    if (v > 0xffff) throw EncodeOverflowError(std::string(what) + " exceeds u16");
}

}  // namespace

std::vector<std::uint8_t> encode(const NetMessage& m) {
    WireWriter w;
    switch (m.variant()) {
        case MsgVariant::Descriptor: {
            const auto& d = std::get<DescriptorMsg>(m.payload);
            w.u8(d.sender);
            w.u16(d.keyframe);
            for (float f : d.pose) w.f32(f);
            for (std::uint8_t b : d.histogram) w.u8(b);
            break;
        }
        case MsgVariant::CloudRequest: {
            const auto& r = std::get<CloudRequestMsg>(m.payload);
            w.u8(r.sender);
            w.u8(r.target);
            w.u16(r.keyframe);
            break;
        }
        case MsgVariant::Cloud: {
            const auto& c = std::get<CloudMsg>(m.payload);
            w.u8(c.sender);
            w.u16(c.keyframe);
            if (c.compressed) {
                const auto body = encode_compressed(c.cloud);
                w.bytes.insert(w.bytes.end(), body.begin(), body.end());
            } else {
                check_u16(c.raw.size(), "raw cloud count");
                w.u16(static_cast<std::uint16_t>(c.raw.size()));
                for (const auto& p : c.raw) {
                    w.f32(p[0]);
                    w.f32(p[1]);
                }
            }
            break;
        }
        case MsgVariant::Loop: {
            const auto& l = std::get<LoopMsg>(m.payload);
            w.u8(l.robot_a);
            w.u16(l.keyframe_a);
            w.u8(l.robot_b);
            w.u16(l.keyframe_b);
            for (float f : l.transform) w.f32(f);
            for (float f : l.cov_diagonal) w.f32(f);
            break;
        }
        case MsgVariant::PoseUpdate: {
            const auto& u = std::get<PoseUpdateMsg>(m.payload);
            w.u8(u.sender);
            check_u16(u.poses.size(), "pose update count");
            w.u16(static_cast<std::uint16_t>(u.poses.size()));
            for (const auto& e : u.poses) {
                w.u16(e.keyframe);
                for (float f : e.pose) w.f32(f);
            }
            break;
        }
    }
    return w.bytes;
}

NetMessage decode(MsgVariant v, const std::vector<std::uint8_t>& bytes, bool cloud_compressed) {
    WireReader r{bytes.data(), bytes.size()};
    NetMessage m;
    switch (v) {
        case MsgVariant::Descriptor: {
            DescriptorMsg d;
            d.sender = r.u8();
            d.keyframe = r.u16();
            for (float& f : d.pose) f = r.f32();
            for (std::uint8_t& b : d.histogram) b = r.u8();
            m.payload = d;
            break;
        }
        case MsgVariant::CloudRequest: {
            CloudRequestMsg q;
            q.sender = r.u8();
            q.target = r.u8();
            q.keyframe = r.u16();
            m.payload = q;
            break;
        }
        case MsgVariant::Cloud: {
            CloudMsg c;
            c.sender = r.u8();
            c.keyframe = r.u16();
            c.compressed = cloud_compressed;
            if (cloud_compressed) {
                c.cloud = decode_compressed(bytes.data() + r.pos, bytes.size() - r.pos);
            } else {
                const std::uint16_t n = r.u16();
                c.raw.resize(n);
                for (auto& p : c.raw) {
                    p[0] = r.f32();
                    p[1] = r.f32();
                }
            }
            m.payload = c;
            break;
        }
        case MsgVariant::Loop: {
            LoopMsg l;
            l.robot_a = r.u8();
            l.keyframe_a = r.u16();
            l.robot_b = r.u8();
            l.keyframe_b = r.u16();
            for (float& f : l.transform) f = r.f32();
            for (float& f : l.cov_diagonal) f = r.f32();
            m.payload = l;
            break;
        }
        case MsgVariant::PoseUpdate: {
            PoseUpdateMsg u;
            u.sender = r.u8();
            const std::uint16_t n = r.u16();
            u.poses.resize(n);
            for (auto& e : u.poses) {
                e.keyframe = r.u16();
                for (float& f : e.pose) f = r.f32();
            }
            m.payload = u;
            break;
        }
    }
    return m;
}

std::int64_t encoded_size_bits(const NetMessage& m) {
    return static_cast<std::int64_t>(encode(m).size()) * 8;
}

std::int64_t ChannelLog::total_bits() const {
    std::int64_t sum = 0;
    for (const ChannelEvent& e : events) sum += e.size_bits;
    return sum;
}

Utilization utilization(const ChannelLog& log, int window, double mission_duration) {
    Utilization u;
    const std::size_t n = log.events.size();
    if (n == 0) {
        u.summary.duration = std::max(mission_duration, 0.0);
        return u;
    }
    std::vector<std::int64_t> prefix(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + log.events[i].size_bits;

    u.series.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
        const std::int64_t bits = prefix[i + 1] - prefix[j];
        const double t0 = j == 0 ? 0.0 : log.events[j - 1].timestamp;
        const double elapsed = log.events[i].timestamp - t0;
        const double rate = elapsed > 0.0 ? static_cast<double>(bits) / elapsed : 0.0;
        u.series.push_back(UtilizationPoint{log.events[i].timestamp, rate});
    }

    u.summary.total_bits = prefix[n];
    u.summary.duration =
        mission_duration > 0.0 ? mission_duration : log.events.back().timestamp;
    u.summary.average_bps =
        u.summary.duration > 0.0 ? static_cast<double>(u.summary.total_bits) / u.summary.duration
                                 : 0.0;
    double mn = u.series.front().bits_per_second, mx = mn;
    for (const auto& p : u.series) {
        mn = std::min(mn, p.bits_per_second);
        mx = std::max(mx, p.bits_per_second);
    }
    u.summary.min_bps = mn;
    u.summary.max_bps = mx;
    return u;
}

Channel::Channel(int n_robots, bool meter_per_recipient)
    : queues_(n_robots), meter_per_recipient_(meter_per_recipient) {}

void Channel::broadcast(const NetMessage& m, double t) {
    if (t < last_t_) throw std::invalid_argument("channel: timestamps must be non-decreasing");
    last_t_ = t;
    const int from = m.sender();
    int recipients = 0;
    for (int r = 0; r < n_robots(); ++r) {
        if (r == from) continue;
        queues_[r].push_back(m);
        ++recipients;
    }
    const std::int64_t bits = encoded_size_bits(m);
    const int meter_count = meter_per_recipient_ ? recipients : 1;
    for (int k = 0; k < meter_count; ++k)
        log_.events.push_back(ChannelEvent{t, from, m.variant(), bits});
    trace_.emplace_back(t, m);
}

std::vector<NetMessage> Channel::drain(int robot) {
    std::vector<NetMessage> out(queues_[robot].begin(), queues_[robot].end());
    queues_[robot].clear();
    return out;
}

bool Channel::has_mail(int robot) const { return !queues_[robot].empty(); }

void Channel::write_log_csv(const std::string& path) const {
    std::ofstream f(path);
    f << "timestamp,sender,variant,size_bits\n";
    char buf[64];
    for (const ChannelEvent& e : log_.events) {
        std::snprintf(buf, sizeof buf, "%.3f", e.timestamp);
        f << buf << "," << e.sender << "," << msg_variant_name(e.variant) << "," << e.size_bits
          << "\n";
    }
}

void write_utilization_csv(const Utilization& u, const std::string& path) {
    std::ofstream f(path);
    f << "timestamp,bits_per_second\n";
    char buf[96];
    for (const auto& p : u.series) {
        std::snprintf(buf, sizeof buf, "%.3f,%.6f", p.timestamp, p.bits_per_second);
        f << buf << "\n";
    }
}

std::string check_protocol_causality(const std::vector<std::pair<double, NetMessage>>& trace) {
    // (sender, keyframe) of every descriptor seen so far, and every cloud
    // request issued so far
    std::set<std::pair<int, int>> descriptors;
    std::set<std::pair<int, int>> requested;  // (target, keyframe)
    for (const auto& [t, m] : trace) {
        (void)t;
        switch (m.variant()) {
            case MsgVariant::Descriptor: {
                const auto& d = std::get<DescriptorMsg>(m.payload);
                descriptors.insert({d.sender, d.keyframe});
                break;
            }
            case MsgVariant::CloudRequest: {
                const auto& r = std::get<CloudRequestMsg>(m.payload);
                if (!descriptors.count({r.target, r.keyframe}))
                    return "cloud request for (" + std::to_string(r.target) + "," +
                           std::to_string(r.keyframe) + ") precedes its descriptor";
                requested.insert({r.target, r.keyframe});
                break;
            }
            case MsgVariant::Cloud: {
                const auto& c = std::get<CloudMsg>(m.payload);
                if (!requested.count({c.sender, c.keyframe}))
                    return "cloud (" + std::to_string(c.sender) + "," +
                           std::to_string(c.keyframe) + ") was never requested";
                break;
            }
            default: break;
        }
    }
    return "";
}

}  // namespace sonarfleet
