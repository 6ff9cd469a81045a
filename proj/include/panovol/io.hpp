// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary formats (all little-endian):
//   S2DV  volume     "S2DV" u32 version=1, u32 nx, ny, nz, f32 extent_e,
//                    extent_n, max_height, ground_density, then nx*ny*nz f32
//                    (x-major, z fastest). 32-byte header.
//   S2DM  float map  "S2DM" u32 version=1, u32 h, w, channels, then h*w*c f32
//                    row-major. 20-byte header.
//   S2DH  histogram  "S2DH\0\0\0\0", then 270 f32 (R bins, G bins, B bins).

#include "panovol/core.hpp"
#include "panovol/supervise.hpp"
#include "panovol/volume.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

namespace panovol::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kVolumeHeaderBytes = 36;
inline constexpr std::size_t kMapHeaderBytes = 20;
inline constexpr std::size_t kHistogramBytes = 8 + 4 * 3 * kSkyHistogramBins;

namespace detail {

inline void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
    }
}

inline void put_f32(std::vector<std::uint8_t> &out, double v) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

/// Cursor over a byte buffer that reports offsets in its errors.
class Reader {
  public:
    Reader(std::vector<std::uint8_t> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

    void need(std::size_t n, const char *what) const {
        if (pos_ + n > bytes_.size()) {
            throw FormatError(source_ + ": truncated " + what + " at byte offset " + std::to_string(pos_) + ", missing " +
                              std::to_string(pos_ + n - bytes_.size()) + " bytes");
        }
    }

    void magic(std::string_view expected) {
        need(expected.size(), "magic");
        if (std::memcmp(bytes_.data() + pos_, expected.data(), expected.size()) != 0) {
            throw FormatError(source_ + ": bad magic at byte offset " + std::to_string(pos_) + ", expected \"" +
                              std::string(expected.substr(0, 4)) + "\"");
        }
        pos_ += expected.size();
    }

    std::uint32_t u32(const char *what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + b]) << (8 * b);
        }
        pos_ += 4;
        return v;
    }

    double f32(const char *what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }

    void version() {
        const std::size_t at = pos_;
        const std::uint32_t v = u32("version");
        if (v != kFormatVersion) {
            throw FormatError(source_ + ": unsupported version " + std::to_string(v) + " at byte offset " +
                              std::to_string(at));
        }
    }

    void finish() const {
        if (pos_ != bytes_.size()) {
            throw FormatError(source_ + ": " + std::to_string(bytes_.size() - pos_) +
                              " trailing bytes at byte offset " + std::to_string(pos_));
        }
    }

    std::size_t offset() const { return pos_; }
    const std::string &source() const { return source_; }

  private:
    std::vector<std::uint8_t> bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(path.string() + ": cannot open for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path &path, const std::vector<std::uint8_t> &bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError(path.string() + ": cannot open for writing");
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError(path.string() + ": write failed");
    }
}

// ---- S2DV ----------------------------------------------------------------

inline std::vector<std::uint8_t> encode_volume(const DensityVolume &vol) {
    std::vector<std::uint8_t> out;
    out.reserve(kVolumeHeaderBytes + 4 * vol.node_count());
    out.insert(out.end(), {'S', '2', 'D', 'V'});
    detail::put_u32(out, kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(vol.nx()));
    detail::put_u32(out, static_cast<std::uint32_t>(vol.ny()));
    detail::put_u32(out, static_cast<std::uint32_t>(vol.nz()));
    detail::put_f32(out, vol.frame().extent_e);
    detail::put_f32(out, vol.frame().extent_n);
    detail::put_f32(out, vol.frame().max_height);
    detail::put_f32(out, vol.ground_density());
    for (double v : vol.values()) {
        detail::put_f32(out, v);
    }
    return out;
}

inline DensityVolume decode_volume(std::vector<std::uint8_t> bytes, const std::string &source = "volume") {
    detail::Reader r(std::move(bytes), source);
    r.magic("S2DV");
    r.version();
    const std::size_t nx = r.u32("nx"), ny = r.u32("ny"), nz = r.u32("nz");
    WorldFrame frame;
    frame.extent_e = r.f32("extent_e");
    frame.extent_n = r.f32("extent_n");
    frame.max_height = r.f32("max_height");
    const double ground = r.f32("ground_density");
    const std::size_t count = nx * ny * nz;
    r.need(4 * count, "payload");
    std::vector<double> values(count);
    for (double &v : values) {
        v = r.f32("payload");
    }
    r.finish();
    try {
        DensityVolume vol(frame, nx, ny, nz, 0.0, ground);
        vol.assign(values);
        return vol;
    } catch (const DomainError &e) {
        throw FormatError(source + ": " + e.what());
    }
}

inline void write_volume(const std::filesystem::path &path, const DensityVolume &vol) {
    write_bytes(path, encode_volume(vol));
}

inline DensityVolume read_volume(const std::filesystem::path &path) {
    return decode_volume(read_bytes(path), path.string());
}

// ---- S2DM ----------------------------------------------------------------

inline std::vector<std::uint8_t> encode_map(const Image &img) {
    std::vector<std::uint8_t> out;
    out.reserve(kMapHeaderBytes + 4 * img.size());
    out.insert(out.end(), {'S', '2', 'D', 'M'});
    detail::put_u32(out, kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(img.height()));
    detail::put_u32(out, static_cast<std::uint32_t>(img.width()));
    detail::put_u32(out, static_cast<std::uint32_t>(img.channels()));
    for (double v : img.values()) {
        detail::put_f32(out, v);
    }
    return out;
}

inline Image decode_map(std::vector<std::uint8_t> bytes, const std::string &source = "map") {
    detail::Reader r(std::move(bytes), source);
    r.magic("S2DM");
    r.version();
    const std::size_t h = r.u32("height"), w = r.u32("width"), c = r.u32("channels");
    r.need(4 * h * w * c, "payload");
    Image img(h, w, c);
    for (double &v : img.values()) {
        v = r.f32("payload");
    }
    r.finish();
    return img;
}

inline void write_map(const std::filesystem::path &path, const Image &img) { write_bytes(path, encode_map(img)); }

inline Image read_map(const std::filesystem::path &path) { return decode_map(read_bytes(path), path.string()); }

// ---- S2DH ----------------------------------------------------------------

inline std::vector<std::uint8_t> encode_histogram(const SkyHistogram &h) {
    if (h.bins != kSkyHistogramBins || h.mass.size() != 3 * kSkyHistogramBins) {
        throw DomainError("S2DH histograms must have " + std::to_string(kSkyHistogramBins) + " bins per channel");
    }
    std::vector<std::uint8_t> out{'S', '2', 'D', 'H', 0, 0, 0, 0};
    for (double v : h.mass) {
        detail::put_f32(out, v);
    }
    return out;
}

inline SkyHistogram decode_histogram(std::vector<std::uint8_t> bytes, const std::string &source = "histogram") {
    detail::Reader r(std::move(bytes), source);
    r.magic(std::string_view("S2DH\0\0\0\0", 8));
    SkyHistogram h{kSkyHistogramBins, std::vector<double>(3 * kSkyHistogramBins)};
    r.need(4 * h.mass.size(), "payload");
    for (double &v : h.mass) {
        v = r.f32("payload");
    }
    r.finish();
    return h;
}

inline void write_histogram(const std::filesystem::path &path, const SkyHistogram &h) {
    write_bytes(path, encode_histogram(h));
}

inline SkyHistogram read_histogram(const std::filesystem::path &path) {
    return decode_histogram(read_bytes(path), path.string());
}

// ---- PNG -----------------------------------------------------------------

/// 8-bit quantization of a [0,1] value.
inline std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Writes a 1- or 3-channel [0,1] image as 8-bit gray or RGB PNG.
inline void write_png(const std::filesystem::path &path, const Image &img) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw DomainError(path.string() + ": PNG export needs 1 or 3 channels, got " + std::to_string(img.channels()));
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::vector<std::uint8_t> pixels(img.size());
    std::transform(img.values().begin(), img.values().end(), pixels.begin(), quantize);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError(path.string() + ": PNG write failed: " + msg);
    }
}

/// Reads any PNG as RGB in [0,1].
inline Image read_png(const std::filesystem::path &path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw FormatError(path.string() + ": not a readable PNG: " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError(path.string() + ": PNG decode failed: " + msg);
    }
    Image img(image.height, image.width, 3);
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.values()[i] = static_cast<double>(pixels[i]) / 255.0;
    }
    return img;
}

} // namespace panovol::io
