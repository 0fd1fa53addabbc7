#include "avaccel/segment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "avaccel/bytes.hpp"

namespace avaccel {

namespace {

constexpr std::size_t kMagicSize = 5;
// frame_index + 11 doubles + front_present + h + w + channels
constexpr std::size_t kFrameFixedBytes = 4 + 3 * 8 + 1 + 3 * 8 + 3 * 8 + 2 * 8 + 2 + 2 + 1;
constexpr std::size_t kImageDimsOffset = kFrameFixedBytes - 5;

std::uint8_t quantize_pixel(Real v) {
    const long q = std::lround(static_cast<double>(v) * 255.0);
    return static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
}

void validate_for_write(const Segment& seg) {
    if (seg.frames.size() > 0xffffffffu) {
        throw DataError("segment: too many frames");
    }
    for (std::size_t i = 0; i < seg.frames.size(); ++i) {
        const FrameRecord& f = seg.frames[i];
        if (f.frame_index != i) {
            throw DataError("segment " + std::to_string(seg.segment_id) + ": frame " +
                            std::to_string(i) + " has index " + std::to_string(f.frame_index));
        }
        if (f.image.rank() != 3 || f.image.extent(2) != 3 || f.image.extent(0) > 0xffff ||
            f.image.extent(1) > 0xffff) {
            throw DataError("segment: frame " + std::to_string(i) + " image has shape " +
                            shape_string(f.image.shape()));
        }
        if (!f.front_present &&
            (!f.front_velocity.isZero(0) || !f.front_accel.isZero(0) || !f.rel_distance.isZero(0))) {
            throw DataError("segment: frame " + std::to_string(i) +
                            " has front-vehicle values but no front vehicle");
        }
    }
}

FrameRecord decode_frame(ByteReader& r, std::size_t expected_index) {
    const auto fail = [&](const std::string& what) {
        return FormatError(FormatError::Kind::invalid_field,
                           "frame " + std::to_string(expected_index) + ": " + what,
                           expected_index);
    };
    FrameRecord f;
    f.frame_index = r.u32();
    if (f.frame_index != expected_index) {
        throw fail("index field reads " + std::to_string(f.frame_index));
    }
    for (int k = 0; k < 3; ++k) f.av_velocity[k] = static_cast<Real>(r.f64());
    const std::uint8_t present = r.u8();
    if (present > 1) throw fail("front_present byte " + std::to_string(present));
    f.front_present = present == 1;
    for (int k = 0; k < 3; ++k) f.front_velocity[k] = static_cast<Real>(r.f64());
    for (int k = 0; k < 3; ++k) f.front_accel[k] = static_cast<Real>(r.f64());
    for (int k = 0; k < 2; ++k) f.rel_distance[k] = static_cast<Real>(r.f64());
    const std::size_t h = r.u16();
    const std::size_t w = r.u16();
    const std::size_t c = r.u8();
    if (h == 0 || w == 0 || h % 2 || w % 2 || c != 3) {
        throw fail("image " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                   std::to_string(c));
    }
    const auto pixels = r.take(h * w * c);
    f.image = Tensor({h, w, c});
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        f.image[i] = static_cast<Real>(pixels[i]) / Real(255);
    }
    return f;
}

}  // namespace

std::vector<FeatureVector> segment_features(const Segment& seg) {
    std::vector<FeatureVector> out;
    for (std::size_t i = 1; i < seg.frames.size(); ++i) {
        out.push_back(build_feature_vector(seg.frames[i], seg.frames[i - 1]));
    }
    return out;
}

std::vector<std::uint8_t> encode_segment(const Segment& seg) {
    validate_for_write(seg);
    ByteWriter w;
    w.raw(std::string_view(kSegmentMagic, kMagicSize));
    w.u8(kSegmentVersion);
    w.u64(seg.segment_id);
    w.u32(static_cast<std::uint32_t>(seg.frames.size()));
    w.u16(seg.frame_rate_hz);
    for (const FrameRecord& f : seg.frames) {
        const std::size_t start = w.size();
        w.u32(f.frame_index);
        for (int k = 0; k < 3; ++k) w.f64(f.av_velocity[k]);
        w.u8(f.front_present ? 1 : 0);
        for (int k = 0; k < 3; ++k) w.f64(f.front_velocity[k]);
        for (int k = 0; k < 3; ++k) w.f64(f.front_accel[k]);
        for (int k = 0; k < 2; ++k) w.f64(f.rel_distance[k]);
        w.u16(static_cast<std::uint16_t>(f.image.extent(0)));
        w.u16(static_cast<std::uint16_t>(f.image.extent(1)));
        w.u8(static_cast<std::uint8_t>(f.image.extent(2)));
        for (Real v : f.image.values()) w.u8(quantize_pixel(v));
        const auto body = std::span(w.bytes()).subspan(start);
        w.u32(crc32_ieee(body));
    }
    w.u32(crc32_ieee(std::span(w.bytes()).subspan(kMagicSize)));
    return std::move(w.bytes());
}

Segment decode_segment(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagicSize ||
        !std::equal(bytes.begin(), bytes.begin() + kMagicSize, kSegmentMagic)) {
        throw FormatError(FormatError::Kind::bad_magic, "segment: bad magic (expected AVSG1)");
    }
    ByteReader r(bytes);
    r.seek(kMagicSize);
    const std::uint8_t version = r.u8();
    if (version != kSegmentVersion) {
        throw FormatError(FormatError::Kind::version_mismatch,
                          "segment: version " + std::to_string(version) + ", expected " +
                              std::to_string(kSegmentVersion));
    }
    Segment seg;
    seg.segment_id = r.u64();
    const std::uint32_t count = r.u32();
    seg.frame_rate_hz = r.u16();

    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t start = r.pos();
        // The frame length depends on its own image-dimension bytes, so bound
        // it before trusting it: a frame that claims to run past the stream
        // is reported against this frame.
        if (r.remaining() < kFrameFixedBytes + 4) {
            throw FormatError(FormatError::Kind::truncated,
                              "segment: stream ends inside frame " + std::to_string(i), i);
        }
        const auto dims = bytes.subspan(start + kImageDimsOffset, 5);
        const std::size_t pixels = std::size_t(dims[0] | (dims[1] << 8)) *
                                   std::size_t(dims[2] | (dims[3] << 8)) * dims[4];
        const std::size_t frame_bytes = kFrameFixedBytes + pixels;
        if (r.remaining() < frame_bytes + 4) {
            throw FormatError(FormatError::Kind::crc_mismatch,
                              "segment: frame " + std::to_string(i) +
                                  " CRC check failed (declared length overruns the stream)",
                              i);
        }
        const std::uint32_t stored =
            ByteReader(bytes.subspan(start + frame_bytes, 4)).u32();
        if (crc32_ieee(bytes.subspan(start, frame_bytes)) != stored) {
            throw FormatError(FormatError::Kind::crc_mismatch,
                              "segment: frame " + std::to_string(i) + " CRC check failed", i);
        }
        seg.frames.push_back(decode_frame(r, i));
        r.u32();  // frame CRC, already verified
    }
    const std::size_t body_end = r.pos();
    const std::uint32_t file_crc = r.u32();
    if (crc32_ieee(bytes.subspan(kMagicSize, body_end - kMagicSize)) != file_crc) {
        throw FormatError(FormatError::Kind::crc_mismatch, "segment: file CRC check failed");
    }
    if (r.remaining() != 0) {
        throw FormatError(FormatError::Kind::invalid_field,
                          "segment: " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return seg;
}

std::size_t write_segment(const Segment& seg, std::ostream& sink) {
    const auto bytes = encode_segment(seg);
    sink.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    if (!sink) {
        throw DataError("write_segment: stream write failed");
    }
    return bytes.size();
}

Segment read_segment(std::istream& source) { return decode_segment(read_all(source)); }

void save_segment(const Segment& seg, const std::string& path) {
    write_file(path, encode_segment(seg));
}

Segment load_segment(const std::string& path) {
    try {
        return decode_segment(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(e.kind(), path + ": " + e.what(), e.frame());
    }
}

}  // namespace avaccel
