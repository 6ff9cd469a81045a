// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panovol/camera.hpp"
#include "panovol/core.hpp"
#include "panovol/supervise.hpp"
#include "panovol/volume.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace panovol {

struct SolidGround {
    Rgb color{0.5, 0.5, 0.5};
};

struct CheckerGround {
    double size_m = 3.2;
    Rgb c1{0.8, 0.8, 0.8};
    Rgb c2{0.2, 0.2, 0.2};
};

using GroundAlbedo = std::variant<SolidGround, CheckerGround>;

struct BoxPrimitive {
    double center_e = 0.0;
    double center_n = 0.0;
    double size_e = 1.0;
    double size_n = 1.0;
    double height = 1.0;
    Rgb albedo{1.0, 0.0, 0.0};
};

struct CylinderPrimitive {
    double center_e = 0.0;
    double center_n = 0.0;
    double radius = 1.0;
    double height = 1.0;
    Rgb albedo{0.0, 1.0, 0.0};
};

using Primitive = std::variant<BoxPrimitive, CylinderPrimitive>;

/// Randomly placed cylinders or boxes, expanded deterministically from the
/// scene seed. Positions avoid a disc of `clear_radius` around each of the
/// `keep_clear` points.
struct Scatter {
    bool cylinders = true;
    std::size_t count = 0;
    double size_min = 1.0;  // radius for cylinders, side for boxes
    double size_max = 1.0;
    double height_min = 1.0;
    double height_max = 1.0;
    double region_e_min = 0.0, region_e_max = 0.0, region_n_min = 0.0, region_n_max = 0.0;
    double clear_radius = 0.0;
    std::vector<std::pair<double, double>> keep_clear;
    Rgb albedo{0.1, 0.5, 0.1};
};

/// Procedural ground-truth scene.
struct SceneSpec {
    std::string name;
    WorldFrame frame;
    GroundAlbedo ground = SolidGround{};
    std::vector<Primitive> primitives;
    std::vector<Scatter> scatters;
    Rgb sky_color{0.55, 0.7, 0.9};
    std::uint64_t seed = 0;
};

namespace detail {

inline double uniform(std::mt19937_64 &rng, double lo, double hi) {
    // mt19937_64 output is fully specified, unlike std distributions.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

inline void primitive_bounds(const Primitive &p, double &e0, double &e1, double &n0, double &n1, double &h) {
    if (const auto *b = std::get_if<BoxPrimitive>(&p)) {
        e0 = b->center_e - 0.5 * b->size_e;
        e1 = b->center_e + 0.5 * b->size_e;
        n0 = b->center_n - 0.5 * b->size_n;
        n1 = b->center_n + 0.5 * b->size_n;
        h = b->height;
    } else {
        const auto &c = std::get<CylinderPrimitive>(p);
        e0 = c.center_e - c.radius;
        e1 = c.center_e + c.radius;
        n0 = c.center_n - c.radius;
        n1 = c.center_n + c.radius;
        h = c.height;
    }
}

} // namespace detail

/// Primitives with scatters expanded, in a fixed order.
inline std::vector<Primitive> expand_primitives(const SceneSpec &spec) {
    std::vector<Primitive> out = spec.primitives;
    std::mt19937_64 rng(spec.seed);
    for (const Scatter &s : spec.scatters) {
        std::size_t placed = 0;
        for (std::size_t attempt = 0; placed < s.count && attempt < 1000 * (s.count + 1); ++attempt) {
            const double size = detail::uniform(rng, s.size_min, s.size_max);
            const double height = detail::uniform(rng, s.height_min, s.height_max);
            const double e = detail::uniform(rng, s.region_e_min, s.region_e_max);
            const double n = detail::uniform(rng, s.region_n_min, s.region_n_max);
            bool clear = true;
            for (const auto &[ke, kn] : s.keep_clear) {
                if (std::hypot(e - ke, n - kn) < s.clear_radius + size) {
                    clear = false;
                }
            }
            if (!clear) {
                continue;
            }
            if (s.cylinders) {
                out.emplace_back(CylinderPrimitive{e, n, size, height, s.albedo});
            } else {
                out.emplace_back(BoxPrimitive{e, n, size, size, height, s.albedo});
            }
            ++placed;
        }
    }
    return out;
}

inline void validate_scene(const SceneSpec &spec, const std::vector<Primitive> &prims) {
    spec.frame.validate();
    if (const auto *c = std::get_if<CheckerGround>(&spec.ground); c && !(c->size_m > 0.0)) {
        throw DomainError("scene '" + spec.name + "': checker size must be positive");
    }
    const double he = 0.5 * spec.frame.extent_e;
    const double hn = 0.5 * spec.frame.extent_n;
    for (std::size_t i = 0; i < prims.size(); ++i) {
        double e0, e1, n0, n1, h;
        detail::primitive_bounds(prims[i], e0, e1, n0, n1, h);
        if (!(e1 > e0) || !(n1 > n0) || !(h > 0.0)) {
            throw DomainError("scene '" + spec.name + "': primitive " + std::to_string(i) + " has non-positive size");
        }
        if (e0 < -he || e1 > he || n0 < -hn || n1 > hn || h > spec.frame.max_height) {
            throw DomainError("scene '" + spec.name + "': primitive " + std::to_string(i) +
                              " lies outside the footprint or above max_height");
        }
    }
}

inline bool primitive_contains(const Primitive &p, Vec3 q) {
    if (const auto *b = std::get_if<BoxPrimitive>(&p)) {
        return std::abs(q.e - b->center_e) <= 0.5 * b->size_e && std::abs(q.n - b->center_n) <= 0.5 * b->size_n &&
               q.u >= 0.0 && q.u <= b->height;
    }
    const auto &c = std::get<CylinderPrimitive>(p);
    return std::hypot(q.e - c.center_e, q.n - c.center_n) <= c.radius && q.u >= 0.0 && q.u <= c.height;
}

inline Rgb primitive_albedo(const Primitive &p) {
    return std::visit([](const auto &x) { return x.albedo; }, p);
}

inline double primitive_height(const Primitive &p) {
    return std::visit([](const auto &x) { return x.height; }, p);
}

inline Rgb ground_albedo(const SceneSpec &spec, double e, double n) {
    if (const auto *s = std::get_if<SolidGround>(&spec.ground)) {
        return s->color;
    }
    const auto &c = std::get<CheckerGround>(spec.ground);
    const auto ie = static_cast<long long>(std::floor((e + 0.5 * spec.frame.extent_e) / c.size_m));
    const auto in = static_cast<long long>(std::floor((0.5 * spec.frame.extent_n - n) / c.size_m));
    return ((ie + in) % 2 == 0) ? c.c1 : c.c2;
}

/// Color seen from straight above at (e, n): top of the tallest primitive
/// covering it, else the ground.
inline Rgb surface_albedo(const SceneSpec &spec, const std::vector<Primitive> &prims, double e, double n) {
    double best = -1.0;
    Rgb color = ground_albedo(spec, e, n);
    for (const Primitive &p : prims) {
        const double h = primitive_height(p);
        if (h > best && primitive_contains(p, {e, n, 0.0})) {
            best = h;
            color = primitive_albedo(p);
        }
    }
    return color;
}

struct BakedScene {
    DensityVolume volume;
    std::vector<Primitive> primitives;
};

/// Ground-truth density: ground_density at nodes inside any primitive or on
/// the ground layer, 0 elsewhere.
inline BakedScene bake_scene(const SceneSpec &spec, std::size_t nx, std::size_t ny, std::size_t nz) {
    BakedScene out{DensityVolume(spec.frame, nx, ny, nz), expand_primitives(spec)};
    validate_scene(spec, out.primitives);
    DensityVolume &vol = out.volume;
    const double solid = vol.ground_density();
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            vol.set(i, j, 0, solid);
            for (std::size_t k = 1; k < nz; ++k) {
                const Vec3 p = vol.node_position(i, j, k);
                for (const Primitive &prim : out.primitives) {
                    if (primitive_contains(prim, p)) {
                        vol.set(i, j, k, solid);
                        break;
                    }
                }
            }
        }
    }
    return out;
}

/// Orthographic overhead image, unshaded, [0,1] RGB.
inline Image render_satellite(const SceneSpec &spec, const SatelliteCamera &cam) {
    const std::vector<Primitive> prims = expand_primitives(spec);
    validate_scene(spec, prims);
    Image img(cam.height, cam.width, 3);
    for (std::size_t r = 0; r < cam.height; ++r) {
        const double n = (0.5 * static_cast<double>(cam.height) - (static_cast<double>(r) + 0.5)) * cam.scale_n;
        for (std::size_t c = 0; c < cam.width; ++c) {
            const double e = ((static_cast<double>(c) + 0.5) - 0.5 * static_cast<double>(cam.width)) * cam.scale_e;
            const Rgb a = surface_albedo(spec, prims, e, n);
            img(r, c, 0) = a.r;
            img(r, c, 1) = a.g;
            img(r, c, 2) = a.b;
        }
    }
    return img;
}

/// Exact ray hit: distance, surface and color.
struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int surface = -1;  // -1 none, 0 ground, 1 + 8*primitive + face otherwise
    Rgb albedo;

    bool valid() const { return surface >= 0; }
};

namespace detail {

inline void consider(Hit &best, double t, int surface, Rgb albedo) {
    if (t > 1e-12 && t < best.t) {
        best = {t, surface, albedo};
    }
}

inline void intersect_box(const BoxPrimitive &b, int id, Vec3 o, Vec3 d, Hit &best) {
    const double lo[3] = {b.center_e - 0.5 * b.size_e, b.center_n - 0.5 * b.size_n, 0.0};
    const double hi[3] = {b.center_e + 0.5 * b.size_e, b.center_n + 0.5 * b.size_n, b.height};
    const double oo[3] = {o.e, o.n, o.u};
    const double dd[3] = {d.e, d.n, d.u};
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    int face = 0;
    for (int a = 0; a < 3; ++a) {
        if (dd[a] == 0.0) {
            if (oo[a] < lo[a] || oo[a] > hi[a]) {
                return;
            }
            continue;
        }
        double ta = (lo[a] - oo[a]) / dd[a];
        double tb = (hi[a] - oo[a]) / dd[a];
        int fa = 2 * a;
        if (ta > tb) {
            std::swap(ta, tb);
            fa = 2 * a + 1;
        }
        if (ta > t0) {
            t0 = ta;
            face = fa;
        }
        t1 = std::min(t1, tb);
    }
    if (t1 >= t0 && t0 > 0.0) {
        consider(best, t0, 1 + 8 * id + face, b.albedo);
    }
}

inline void intersect_cylinder(const CylinderPrimitive &c, int id, Vec3 o, Vec3 d, Hit &best) {
    // Side wall.
    const double oe = o.e - c.center_e;
    const double on = o.n - c.center_n;
    const double a = d.e * d.e + d.n * d.n;
    if (a > 0.0) {
        const double b = oe * d.e + on * d.n;
        const double cc = oe * oe + on * on - c.radius * c.radius;
        const double disc = b * b - a * cc;
        if (disc >= 0.0) {
            const double t = (-b - std::sqrt(disc)) / a;
            const double u = o.u + t * d.u;
            if (t > 0.0 && u >= 0.0 && u <= c.height) {
                consider(best, t, 1 + 8 * id, c.albedo);
            }
        }
    }
    // Top cap.
    if (d.u < 0.0 && o.u > c.height) {
        const double t = (c.height - o.u) / d.u;
        const double e = oe + t * d.e;
        const double n = on + t * d.n;
        if (e * e + n * n <= c.radius * c.radius) {
            consider(best, t, 1 + 8 * id + 1, c.albedo);
        }
    }
}

} // namespace detail

/// Nearest surface along a ray, by exact intersection. Ground hits outside
/// the footprint do not count.
inline Hit trace_scene(const SceneSpec &spec, const std::vector<Primitive> &prims, Vec3 origin, Vec3 dir) {
    Hit best;
    if (dir.u < 0.0) {
        const double t = -origin.u / dir.u;
        const Vec3 p = origin + t * dir;
        if (spec.frame.contains_footprint(p.e, p.n)) {
            detail::consider(best, t, 0, ground_albedo(spec, p.e, p.n));
        }
    }
    for (std::size_t i = 0; i < prims.size(); ++i) {
        if (const auto *b = std::get_if<BoxPrimitive>(&prims[i])) {
            detail::intersect_box(*b, static_cast<int>(i), origin, dir, best);
        } else {
            detail::intersect_cylinder(std::get<CylinderPrimitive>(prims[i]), static_cast<int>(i), origin, dir, best);
        }
    }
    return best;
}

/// Exact per-pixel ground truth for one panorama. `color` is the albedo of
/// the hit surface (sky color where nothing is hit); the copy-paste color
/// target is a render of the baked volume instead, see render_panorama.
struct OracleMaps {
    Image depth;    // raw: hit distance where hit, else 0
    Image opacity;  // 1 where hit, else 0
    Image color;    // h x w x 3
    SkyMask sky_mask;
    std::vector<int> surface;  // Hit::surface per pixel
};

inline OracleMaps oracle_ground_truth(const SceneSpec &spec, const PanoramaCamera &cam) {
    cam.validate();
    const std::vector<Primitive> prims = expand_primitives(spec);
    validate_scene(spec, prims);
    OracleMaps out{Image(cam.height, cam.width, 1), Image(cam.height, cam.width, 1), Image(cam.height, cam.width, 3),
                   SkyMask(cam.height, cam.width), std::vector<int>(cam.height * cam.width, -1)};
    for (std::size_t y = 0; y < cam.height; ++y) {
        for (std::size_t x = 0; x < cam.width; ++x) {
            const Vec3 dir = panorama_direction(cam, static_cast<double>(x), static_cast<double>(y));
            const Hit hit = trace_scene(spec, prims, cam.position, dir);
            const std::size_t p = y * cam.width + x;
            out.surface[p] = hit.surface;
            const Rgb c = hit.valid() ? hit.albedo : spec.sky_color;
            out.color.values()[3 * p] = c.r;
            out.color.values()[3 * p + 1] = c.g;
            out.color.values()[3 * p + 2] = c.b;
            if (hit.valid()) {
                out.depth.values()[p] = hit.t;
                out.opacity.values()[p] = 1.0;
            } else {
                out.sky_mask.set(p, true);
            }
        }
    }
    return out;
}

} // namespace panovol
