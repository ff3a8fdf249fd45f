#include "dpipe/png16.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpipe/fsio.hpp"

namespace dpipe {

namespace {

void append_be32(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>((v >> 24) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>(v & 0xff));
}

void append_chunk(std::string& s, const char type[4], const std::string& payload) {
    append_be32(s, static_cast<std::uint32_t>(payload.size()));
    std::string body(type, 4);
    body += payload;
    s += body;
    const auto crc = crc32(0, reinterpret_cast<const Bytef*>(body.data()),
                           static_cast<uInt>(body.size()));
    append_be32(s, static_cast<std::uint32_t>(crc));
}

} // namespace

void write_png16(const std::filesystem::path& path, const Tensor& img) {
    if (img.c != 1 && img.c != 3)
        throw std::invalid_argument("write_png16: only 1- or 3-channel images");
    if (img.h < 1 || img.w < 1) throw std::invalid_argument("write_png16: empty image");

    // Raw scanlines: filter byte 0 followed by big-endian 16-bit samples.
    const int bpp = img.c * 2;
    std::vector<unsigned char> raw(static_cast<std::size_t>(img.h) * (1 + static_cast<std::size_t>(img.w) * bpp));
    std::size_t p = 0;
    for (int y = 0; y < img.h; ++y) {
        raw[p++] = 0;
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                const double v = std::clamp(img.at(y, x, ch), 0.0, 1.0);
                const auto q = static_cast<std::uint32_t>(std::lround(v * 65535.0));
                raw[p++] = static_cast<unsigned char>((q >> 8) & 0xff);
                raw[p++] = static_cast<unsigned char>(q & 0xff);
            }
    }

    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> z(zlen);
    if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png16: deflate failed");

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    append_be32(ihdr, static_cast<std::uint32_t>(img.w));
    append_be32(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(16);                            // bit depth
    ihdr.push_back(img.c == 3 ? char(2) : char(0)); // color type
    ihdr.push_back(0);                             // compression
    ihdr.push_back(0);                             // filter
    ihdr.push_back(0);                             // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", std::string(reinterpret_cast<char*>(z.data()), zlen));
    append_chunk(out, "IEND", "");
    write_file_atomic(path, out);
}

} // namespace dpipe
