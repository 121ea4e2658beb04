#include "sonarfleet/cloud_codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sonarfleet/errors.hpp"
#include "sonarfleet/wire.hpp"

namespace sonarfleet {

CompressedCloud compress(const PointCloud2D& cloud, double delta) {
    if (delta <= 0.0) throw OverflowError("compress: delta must be positive");
    CompressedCloud out;
    out.resolution = static_cast<float>(delta);
    if (cloud.empty()) return out;

    double min_x = std::numeric_limits<double>::infinity();
    double min_y = std::numeric_limits<double>::infinity();
    for (const Point2& p : cloud.points) {
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
    }
    // f32 rounding must not push the origin above the true minimum
    float ox = static_cast<float>(min_x);
    float oy = static_cast<float>(min_y);
    if (static_cast<double>(ox) > min_x) ox = std::nextafterf(ox, -std::numeric_limits<float>::infinity());
    if (static_cast<double>(oy) > min_y) oy = std::nextafterf(oy, -std::numeric_limits<float>::infinity());
    out.origin_x = ox;
    out.origin_y = oy;

    out.cells.reserve(cloud.points.size());
    for (const Point2& p : cloud.points) {
        // index against the f32 origin actually transmitted, so decode stays in-grid
        const long i = static_cast<long>(std::floor((p.x - out.origin_x) / delta));
        const long j = static_cast<long>(std::floor((p.y - out.origin_y) / delta));
        if (i < 0 || i > 255 || j < 0 || j > 255)
            throw OverflowError("compress: voxel index out of 8-bit range, delta too small for extent");
        out.cells.emplace_back(static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(j));
    }
    std::sort(out.cells.begin(), out.cells.end());
    out.cells.erase(std::unique(out.cells.begin(), out.cells.end()), out.cells.end());
    return out;
}

PointCloud2D decompress(const CompressedCloud& c) {
    PointCloud2D out;
    out.points.reserve(c.cells.size());
    for (const auto& [i, j] : c.cells) {
        out.points.push_back(Point2{c.origin_x + (i + 0.5) * c.resolution,
                                    c.origin_y + (j + 0.5) * c.resolution});
    }
    return out;
}

std::int64_t encoded_size_bits(const CompressedCloud& c) {
    return kCompressedHeaderBits + kCompressedCountBits +
           static_cast<std::int64_t>(c.cells.size()) * kBitsPerCell;
}

std::int64_t encoded_size_bits_raw(const PointCloud2D& cloud) {
    return static_cast<std::int64_t>(cloud.points.size()) * kBitsPerRawPoint;
}

std::vector<std::uint8_t> encode_compressed(const CompressedCloud& c) {
    if (c.cells.size() > 0xffff) throw EncodeOverflowError("compressed cloud: count exceeds u16");
    WireWriter w;
    w.f32(c.origin_x);
    w.f32(c.origin_y);
    w.f32(c.resolution);
    w.u16(static_cast<std::uint16_t>(c.cells.size()));
    for (const auto& [i, j] : c.cells) {
        w.u8(i);
        w.u8(j);
    }
    return w.bytes;
}

CompressedCloud decode_compressed(const std::uint8_t* data, std::size_t len) {
    WireReader r{data, len};
    CompressedCloud c;
    c.origin_x = r.f32();
    c.origin_y = r.f32();
    c.resolution = r.f32();
    const std::uint16_t n = r.u16();
    c.cells.reserve(n);
    for (std::uint16_t k = 0; k < n; ++k) {
        std::uint8_t i = r.u8();
        std::uint8_t j = r.u8();
        c.cells.emplace_back(i, j);
    }
    return c;
}

}  // namespace sonarfleet
