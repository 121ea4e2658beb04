#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#include "sonarfleet/errors.hpp"

namespace sonarfleet {

// Big-endian byte stream helpers for the wire formats.
struct WireWriter {
    std::vector<std::uint8_t> bytes;

    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u16(std::uint16_t v) {
        bytes.push_back(static_cast<std::uint8_t>(v >> 8));
        bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        bytes.push_back(static_cast<std::uint8_t>(u >> 24));
        bytes.push_back(static_cast<std::uint8_t>((u >> 16) & 0xff));
        bytes.push_back(static_cast<std::uint8_t>((u >> 8) & 0xff));
        bytes.push_back(static_cast<std::uint8_t>(u & 0xff));
    }
};

struct WireReader {
    const std::uint8_t* data;
    std::size_t len;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > len) throw EncodeOverflowError("wire: truncated message");
    }
    std::uint8_t u8() {
        need(1);
        return data[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>((data[pos] << 8) | data[pos + 1]);
        pos += 2;
        return v;
    }
    float f32() {
        need(4);
        std::uint32_t u = (static_cast<std::uint32_t>(data[pos]) << 24) |
                          (static_cast<std::uint32_t>(data[pos + 1]) << 16) |
                          (static_cast<std::uint32_t>(data[pos + 2]) << 8) |
                          static_cast<std::uint32_t>(data[pos + 3]);
        pos += 4;
        float f;
        std::memcpy(&f, &u, 4);
        return f;
    }
};

}  // namespace sonarfleet
