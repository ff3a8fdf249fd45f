#include "dpipe/pfm.hpp"

#include <bit>
#include <cctype>
#include <cstring>

#include "dpipe/fsio.hpp"

namespace dpipe {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

constexpr bool kHostLittle = std::endian::native == std::endian::little;

float byteswap_f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u = ((u & 0x000000ffu) << 24) | ((u & 0x0000ff00u) << 8) | ((u & 0x00ff0000u) >> 8) |
        ((u & 0xff000000u) >> 24);
    std::memcpy(&v, &u, 4);
    return v;
}

// One whitespace-delimited header token starting at `pos`.
std::string next_token(const std::string& buf, std::size_t& pos) {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (start == pos) throw std::runtime_error("pfm: truncated header");
    return buf.substr(start, pos - start);
}

} // namespace

Tensor read_pfm(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    std::size_t pos = 0;
    const std::string magic = next_token(buf, pos);
    int channels;
    if (magic == "PF")
        channels = 3;
    else if (magic == "Pf")
        channels = 1;
    else
        throw std::runtime_error("pfm: bad magic '" + magic + "' in " + path.string());

    int w, h;
    double scale;
    try {
        w = std::stoi(next_token(buf, pos));
        h = std::stoi(next_token(buf, pos));
        scale = std::stod(next_token(buf, pos));
    } catch (const std::exception&) {
        throw std::runtime_error("pfm: malformed header in " + path.string());
    }
    if (w <= 0 || h <= 0) throw std::runtime_error("pfm: bad dimensions in " + path.string());
    if (scale == 0.0) throw std::runtime_error("pfm: zero scale in " + path.string());
    // Exactly one whitespace byte separates the header from the raster.
    if (pos >= buf.size()) throw std::runtime_error("pfm: missing raster in " + path.string());
    ++pos;

    const bool file_little = scale < 0.0;
    const std::size_t count = static_cast<std::size_t>(w) * h * channels;
    if (buf.size() - pos < count * 4)
        throw std::runtime_error("pfm: truncated raster in " + path.string());

    Tensor img(h, w, channels);
    const char* raw = buf.data() + pos;
    for (int row = 0; row < h; ++row) {
        const int y = h - 1 - row; // bottom-to-top storage
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < channels; ++ch) {
                float v;
                std::memcpy(&v, raw + (static_cast<std::size_t>(row) * w + x) * channels * 4 +
                                    static_cast<std::size_t>(ch) * 4,
                            4);
                if (file_little != kHostLittle) v = byteswap_f32(v);
                img.at(y, x, ch) = static_cast<double>(v);
            }
    }
    return img;
}

void write_pfm(const std::filesystem::path& path, const Tensor& img) {
    if (img.c != 1 && img.c != 3)
        throw std::invalid_argument("write_pfm: only 1- or 3-channel images");
    if (img.h < 1 || img.w < 1) throw std::invalid_argument("write_pfm: empty image");

    std::string out;
    out += (img.c == 3) ? "PF\n" : "Pf\n";
    out += std::to_string(img.w) + " " + std::to_string(img.h) + "\n";
    out += kHostLittle ? "-1.0\n" : "1.0\n";
    out.reserve(out.size() + static_cast<std::size_t>(img.size()) * 4);
    for (int row = 0; row < img.h; ++row) {
        const int y = img.h - 1 - row;
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                const float v = static_cast<float>(img.at(y, x, ch));
                char bytes[4];
                std::memcpy(bytes, &v, 4);
                out.append(bytes, 4);
            }
    }
    write_file_atomic(path, out);
}

Psf load_psf(const std::filesystem::path& path, bool* renormalized) {
    Tensor k = read_pfm(path);
    if (k.c != 1) throw std::runtime_error("load_psf: PSF must be grayscale: " + path.string());
    try {
        return make_psf(std::move(k), path.stem().string(), renormalized);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error("load_psf: " + path.string() + ": " + e.what());
    }
}

void save_psf(const std::filesystem::path& path, const Psf& psf) {
    write_pfm(path, psf.kernel);
}

} // namespace dpipe
