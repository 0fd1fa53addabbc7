#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "avaccel/features.hpp"

namespace avaccel {

inline constexpr std::uint16_t kFrameRateHz = 10;

/// One contiguous drive: frames indexed 0, 1, 2, ... at 10 Hz.
struct Segment {
    std::uint64_t segment_id = 0;
    std::uint16_t frame_rate_hz = kFrameRateHz;
    std::vector<FrameRecord> frames;
};

/// Feature vectors for frames 1..n-1 (frame 0 has no predecessor, so no
/// target).
std::vector<FeatureVector> segment_features(const Segment& seg);

/*
 * `.avsg` segment files. All integers and floats little-endian.
 *
 *   "AVSG1"               5-byte magic
 *   version     u8        = 1
 *   segment_id  u64
 *   frame_count u32
 *   frame_rate  u16
 *   frame_count times:
 *     frame_index      u32
 *     av_velocity      3 x f64
 *     front_present    u8
 *     front_velocity   3 x f64
 *     front_accel      3 x f64
 *     rel_distance     2 x f64
 *     image h, w       u16, u16
 *     channels         u8
 *     pixels           h*w*channels x u8, round(v * 255)
 *     frame_crc        u32, CRC-32 of this frame's bytes above
 *   file_crc    u32       CRC-32 of everything after the magic
 *
 * Pixel quantization is the only lossy step (|error| <= 1/510).
 */
inline constexpr char kSegmentMagic[] = "AVSG1";
inline constexpr std::uint8_t kSegmentVersion = 1;

std::vector<std::uint8_t> encode_segment(const Segment& seg);
/// Throws FormatError; CRC failures inside a frame carry that frame's index.
Segment decode_segment(std::span<const std::uint8_t> bytes);

/// Returns the number of bytes written.
std::size_t write_segment(const Segment& seg, std::ostream& sink);
Segment read_segment(std::istream& source);

void save_segment(const Segment& seg, const std::string& path);
Segment load_segment(const std::string& path);

}  // namespace avaccel
