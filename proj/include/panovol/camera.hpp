// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panovol/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace panovol {

/// Metric box covered by the overhead image: [-extent_e/2, extent_e/2) x
/// [-extent_n/2, extent_n/2) x [0, max_height). The origin sits on the
/// ground beneath the satellite image center; axes are east, north, up.
struct WorldFrame {
    double extent_e = 51.2;
    double extent_n = 51.2;
    double max_height = 8.0;

    void validate() const {
        if (!(extent_e > 0.0) || !(extent_n > 0.0) || !(max_height > 0.0) || !std::isfinite(extent_e) ||
            !std::isfinite(extent_n) || !std::isfinite(max_height)) {
            throw DomainError("world frame: extents and max_height must be finite and positive");
        }
    }

    Vec3 min_corner() const { return {-0.5 * extent_e, -0.5 * extent_n, 0.0}; }
    Vec3 max_corner() const { return {0.5 * extent_e, 0.5 * extent_n, max_height}; }

    bool contains(Vec3 p) const {
        return p.e >= -0.5 * extent_e && p.e < 0.5 * extent_e && p.n >= -0.5 * extent_n &&
               p.n < 0.5 * extent_n && p.u >= 0.0 && p.u < max_height;
    }

    bool contains_footprint(double e, double n) const {
        return e >= -0.5 * extent_e && e < 0.5 * extent_e && n >= -0.5 * extent_n && n < 0.5 * extent_n;
    }

    double footprint_diagonal() const { return std::hypot(extent_e, extent_n); }

    friend bool operator==(const WorldFrame &, const WorldFrame &) = default;
};

/// Overhead parallel projection. Rows run north to south, columns west to
/// east; height is ignored.
struct SatelliteCamera {
    std::size_t height = 256;  // H, rows
    std::size_t width = 256;   // W, columns
    double scale_n = 0.2;      // meters per pixel along north (rows)
    double scale_e = 0.2;      // meters per pixel along east (columns)

    static SatelliteCamera covering(const WorldFrame &frame, std::size_t height, std::size_t width) {
        if (height == 0 || width == 0) {
            throw DomainError("satellite camera: image size must be positive");
        }
        return {height, width, frame.extent_n / static_cast<double>(height),
                frame.extent_e / static_cast<double>(width)};
    }

    WorldFrame footprint(double max_height) const {
        return {scale_e * static_cast<double>(width), scale_n * static_cast<double>(height), max_height};
    }
};

struct SatellitePixel {
    double row = 0.0;
    double col = 0.0;
};

/// Fractional pixel coordinates; integer pixel (r, c) covers [r, r+1) x [c, c+1)
/// so its center sits at (r + 0.5, c + 0.5).
inline SatellitePixel world_to_satellite_pixel(const SatelliteCamera &cam, Vec3 p) {
    return {0.5 * static_cast<double>(cam.height) - p.n / cam.scale_n,
            0.5 * static_cast<double>(cam.width) + p.e / cam.scale_e};
}

/// Equirectangular panorama camera. The central column faces `heading`
/// (compass azimuth, 0 = north, pi/2 = east); the central row is the horizon.
struct PanoramaCamera {
    Vec3 position{0.0, 0.0, 2.0};
    std::size_t height = 128;
    std::size_t width = 512;
    double heading = 0.0;

    void validate() const {
        if (height == 0 || width == 0) {
            throw DomainError("panorama camera: image size must be positive");
        }
        if (!(heading >= 0.0 && heading < 2.0 * kPi)) {
            throw DomainError("panorama camera: heading must lie in [0, 2pi), got " + std::to_string(heading));
        }
        if (!is_finite(position)) {
            throw DomainError("panorama camera: position must be finite");
        }
    }
};

/// Wraps an arbitrary angle into [0, 2pi).
inline double wrap_heading(double angle) {
    double a = std::fmod(angle, 2.0 * kPi);
    if (a < 0.0) {
        a += 2.0 * kPi;
    }
    return a >= 2.0 * kPi ? 0.0 : a;
}

struct Ray {
    Vec3 origin;
    Vec3 direction;
    double t_near = 0.0;
    double t_far = 0.0;

    Vec3 at(double t) const { return origin + t * direction; }
    bool degenerate() const { return !(t_far > t_near); }

    friend bool operator==(const Ray &, const Ray &) = default;
};

/// Parametric interval [t_near, t_far] of `origin + t * dir` (t >= 0) inside
/// the world cube. Returns {0, 0} when the ray misses it.
inline std::pair<double, double> clip_to_cube(const WorldFrame &frame, Vec3 origin, Vec3 dir) {
    const Vec3 lo = frame.min_corner();
    const Vec3 hi = frame.max_corner();
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    const double o[3] = {origin.e, origin.n, origin.u};
    const double d[3] = {dir.e, dir.n, dir.u};
    const double mn[3] = {lo.e, lo.n, lo.u};
    const double mx[3] = {hi.e, hi.n, hi.u};
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < mn[a] || o[a] > mx[a]) {
                return {0.0, 0.0};
            }
            continue;
        }
        double ta = (mn[a] - o[a]) / d[a];
        double tb = (mx[a] - o[a]) / d[a];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t1 > t0)) {
        return {0.0, 0.0};
    }
    return {t0, t1};
}

/// View direction through fractional pixel (x, y), sampled at the pixel
/// center. No bounds check: x is periodic in the width.
inline Vec3 panorama_direction(const PanoramaCamera &cam, double x, double y) {
    const double w = static_cast<double>(cam.width);
    const double h = static_cast<double>(cam.height);
    const double theta = 2.0 * kPi * (x + 0.5) / w;
    const double zenith = kPi * (y + 0.5) / h;
    const double azimuth = theta - kPi + cam.heading;
    const double s = std::sin(zenith);
    return {s * std::sin(azimuth), s * std::cos(azimuth), std::cos(zenith)};
}

inline Ray panorama_pixel_to_ray(const PanoramaCamera &cam, const WorldFrame &frame, double x, double y) {
    if (!(x >= 0.0 && x < static_cast<double>(cam.width) && y >= 0.0 && y < static_cast<double>(cam.height))) {
        throw DomainError("panorama pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                          ") outside " + std::to_string(cam.height) + "x" + std::to_string(cam.width) + " image");
    }
    Ray ray;
    ray.origin = cam.position;
    ray.direction = panorama_direction(cam, x, y);
    std::tie(ray.t_near, ray.t_far) = clip_to_cube(frame, ray.origin, ray.direction);
    return ray;
}

/// All pixel rays in row-major order.
inline std::vector<Ray> panorama_ray_grid(const PanoramaCamera &cam, const WorldFrame &frame) {
    if (cam.height == 0 || cam.width == 0) {
        throw DomainError("panorama ray grid: zero-sized image");
    }
    std::vector<Ray> rays;
    rays.reserve(cam.height * cam.width);
    for (std::size_t y = 0; y < cam.height; ++y) {
        for (std::size_t x = 0; x < cam.width; ++x) {
            rays.push_back(panorama_pixel_to_ray(cam, frame, static_cast<double>(x), static_cast<double>(y)));
        }
    }
    return rays;
}

} // namespace panovol
