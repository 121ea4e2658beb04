#pragma once

#include <cstdint>
#include <vector>

#include "sonarfleet/geometry.hpp"

namespace sonarfleet {

// Point cloud discretized to an 8-bit voxel grid anchored at its min corner.
// Wire layout (big-endian):
//   [origin_x f32][origin_y f32][resolution f32][count u16][(i u8)(j u8) x count]
struct CompressedCloud {
    float origin_x = 0.0f;
    float origin_y = 0.0f;
    float resolution = 0.0f;
    std::vector<std::pair<std::uint8_t, std::uint8_t>> cells;  // unique, sorted by (i, j)

    std::size_t count() const { return cells.size(); }
    bool operator==(const CompressedCloud& o) const = default;
};

// Throws OverflowError when the cloud extent exceeds 256 * delta on an axis.
CompressedCloud compress(const PointCloud2D& cloud, double delta);

// Each cell decodes to its voxel center: origin + (i + 0.5, j + 0.5) * resolution.
PointCloud2D decompress(const CompressedCloud& c);

// Payload sizes. Raw clouds cost 64 bits per point; compressed clouds cost a
// 96-bit header plus a 16-bit count plus 16 bits per cell.
std::int64_t encoded_size_bits(const CompressedCloud& c);
std::int64_t encoded_size_bits_raw(const PointCloud2D& cloud);

constexpr int kCompressedHeaderBits = 96;
constexpr int kCompressedCountBits = 16;
constexpr int kBitsPerCell = 16;
constexpr int kBitsPerRawPoint = 64;

std::vector<std::uint8_t> encode_compressed(const CompressedCloud& c);
CompressedCloud decode_compressed(const std::uint8_t* data, std::size_t len);

}  // namespace sonarfleet
