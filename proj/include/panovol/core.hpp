// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace panovol {

/// Invalid argument or precondition violation (CLI exit code 1).
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Malformed, truncated or unexpected file content (CLI exit code 2).
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

/// World point or direction in meters: east, north, up.
struct Vec3 {
    double e = 0.0;
    double n = 0.0;
    double u = 0.0;

    friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.e + b.e, a.n + b.n, a.u + b.u}; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.e - b.e, a.n - b.n, a.u - b.u}; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.e, s * a.n, s * a.u}; }
    friend constexpr bool operator==(Vec3, Vec3) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.e * b.e + a.n * b.n + a.u * b.u; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline bool is_finite(Vec3 a) { return std::isfinite(a.e) && std::isfinite(a.n) && std::isfinite(a.u); }

struct Rgb {
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;

    friend constexpr bool operator==(Rgb, Rgb) = default;
};

/// Dense row-major h x w x c buffer of doubles. Used for panorama maps,
/// satellite images and masks alike.
class Image {
  public:
    Image() = default;
    Image(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0)
        : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {}

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double &operator()(std::size_t y, std::size_t x, std::size_t c = 0) {
        return data_[(y * width_ + x) * channels_ + c];
    }
    double operator()(std::size_t y, std::size_t x, std::size_t c = 0) const {
        return data_[(y * width_ + x) * channels_ + c];
    }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool same_shape(const Image &other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    friend bool operator==(const Image &, const Image &) = default;

  private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

inline std::string shape_string(const Image &img) {
    return std::to_string(img.height()) + "x" + std::to_string(img.width()) + "x" +
           std::to_string(img.channels());
}

inline void require_same_shape(const Image &a, const Image &b, const char *what) {
    if (!a.same_shape(b)) {
        throw DomainError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                          shape_string(b));
    }
}

} // namespace panovol
