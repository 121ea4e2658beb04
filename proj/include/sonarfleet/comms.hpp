#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <variant>
#include <vector>

#include "sonarfleet/cloud_codec.hpp"
#include "sonarfleet/geometry.hpp"
#include "sonarfleet/place_recognition.hpp"

namespace sonarfleet {

// Wire layouts are big-endian and byte-aligned; sizes are exact by
// construction and what the channel meter records.

// sender u8 + keyframe u16 + pose 3xf32 + histogram 16xu8 = 248 bits
struct DescriptorMsg {
    std::uint8_t sender = 0;
    std::uint16_t keyframe = 0;
    std::array<float, 3> pose{};  // x, y, theta in the sender frame
    std::array<std::uint8_t, 16> histogram{};
    bool operator==(const DescriptorMsg&) const = default;
};

// sender u8 + target robot u8 + keyframe u16 = 32 bits
struct CloudRequestMsg {
    std::uint8_t sender = 0;
    std::uint8_t target = 0;
    std::uint16_t keyframe = 0;
    bool operator==(const CloudRequestMsg&) const = default;
};

// sender u8 + keyframe u16, then either the compressed-cloud wire layout
// (24 + 112 + 16n bits) or count u16 + 2xf32 per point (24 + 16 + 64n bits).
struct CloudMsg {
    std::uint8_t sender = 0;
    std::uint16_t keyframe = 0;
    bool compressed = false;
    CompressedCloud cloud;                    // when compressed
    std::vector<std::array<float, 2>> raw;    // when not
    bool operator==(const CloudMsg&) const = default;
};

// two (robot u8 + keyframe u16) keys + transform 3xf32 + covariance diagonal
// 3xf32 = 240 bits
struct LoopMsg {
    std::uint8_t robot_a = 0;
    std::uint16_t keyframe_a = 0;
    std::uint8_t robot_b = 0;
    std::uint16_t keyframe_b = 0;
    std::array<float, 3> transform{};
    std::array<float, 3> cov_diagonal{};
    bool operator==(const LoopMsg&) const = default;
};

// sender u8 + count u16 + per pose (keyframe u16 + 3xf32) = 24 + 112k bits
struct PoseUpdateMsg {
    std::uint8_t sender = 0;
    struct Entry {
        std::uint16_t keyframe = 0;
        std::array<float, 3> pose{};
        bool operator==(const Entry&) const = default;
    };
    std::vector<Entry> poses;
    bool operator==(const PoseUpdateMsg&) const = default;
};

enum class MsgVariant : std::uint8_t { Descriptor, CloudRequest, Cloud, Loop, PoseUpdate };

const char* msg_variant_name(MsgVariant v);

struct NetMessage {
    std::variant<DescriptorMsg, CloudRequestMsg, CloudMsg, LoopMsg, PoseUpdateMsg> payload;

    MsgVariant variant() const { return static_cast<MsgVariant>(payload.index()); }
    int sender() const;
    bool operator==(const NetMessage&) const = default;
};

// The wire carries no variant tag; delivery is in-process and the receiver
// knows the variant and, for clouds, whether compression is on.
std::vector<std::uint8_t> encode(const NetMessage& m);
NetMessage decode(MsgVariant v, const std::vector<std::uint8_t>& bytes,
                  bool cloud_compressed = false);
std::int64_t encoded_size_bits(const NetMessage& m);

struct ChannelEvent {
    double timestamp = 0.0;
    int sender = 0;
    MsgVariant variant = MsgVariant::Descriptor;
    std::int64_t size_bits = 0;
};

struct ChannelLog {
    std::vector<ChannelEvent> events;
    std::int64_t total_bits() const;
};

struct UtilizationPoint {
    double timestamp = 0.0;
    double bits_per_second = 0.0;
};

struct UtilizationSummary {
    double average_bps = 0.0;  // total bits / mission duration
    double min_bps = 0.0;      // of the sliding-window series
    double max_bps = 0.0;
    std::int64_t total_bits = 0;
    double duration = 0.0;
};

struct Utilization {
    std::vector<UtilizationPoint> series;
    UtilizationSummary summary;
};

// Sliding-window average over the last `window` events; at each event the rate
// is the window's bit sum divided by the time elapsed since the event
// preceding the window (mission start for the first window).
Utilization utilization(const ChannelLog& log, int window = 100, double mission_duration = -1.0);

// Simulated lossless broadcast bus with per-robot FIFO queues and a metering
// log. A broadcast is metered once regardless of the recipient count (the
// per-recipient alternative is a config switch).
class Channel {
public:
    explicit Channel(int n_robots, bool meter_per_recipient = false);

    // Enqueues for every robot except the sender and logs the event.
    // Timestamps must be non-decreasing.
    void broadcast(const NetMessage& m, double t);

    std::vector<NetMessage> drain(int robot);
    bool has_mail(int robot) const;

    const ChannelLog& log() const { return log_; }
    // Full message trace, for protocol-causality checks.
    const std::vector<std::pair<double, NetMessage>>& trace() const { return trace_; }

    int n_robots() const { return static_cast<int>(queues_.size()); }

    void write_log_csv(const std::string& path) const;

private:
    std::vector<std::deque<NetMessage>> queues_;
    ChannelLog log_;
    std::vector<std::pair<double, NetMessage>> trace_;
    bool meter_per_recipient_;
    double last_t_ = 0.0;
};

void write_utilization_csv(const Utilization& u, const std::string& path);

// Verifies the descriptor -> request -> cloud causality on a message trace.
// Returns an empty string when consistent, else a description of the first
// violation.
std::string check_protocol_causality(const std::vector<std::pair<double, NetMessage>>& trace);

}  // namespace sonarfleet
