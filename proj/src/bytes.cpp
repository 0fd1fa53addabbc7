#include "avaccel/bytes.hpp"

#include <fstream>
#include <iterator>

#include <zlib.h>

namespace avaccel {

std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes, std::uint32_t crc) {
    uLong c = crc;
    // zlib takes uInt lengths; feed large buffers in chunks.
    constexpr std::size_t chunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += chunk) {
        const std::size_t n = std::min(chunk, bytes.size() - off);
        c = ::crc32(c, bytes.data() + off, static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> read_all(std::istream& in) {
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    return read_all(in);
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("write failed for " + path);
    }
}

}  // namespace avaccel
