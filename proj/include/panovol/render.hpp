// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panovol/camera.hpp"
#include "panovol/core.hpp"
#include "panovol/parallel.hpp"
#include "panovol/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace panovol {

inline constexpr std::size_t kDefaultSamplesPerRay = 100;

/// Uniform midpoint samples along one ray. `distance` is the Euclidean
/// distance from the ray origin (the camera) and equals `t`.
struct RayMarchSamples {
    std::vector<double> t;
    std::vector<double> delta;
    std::vector<Vec3> point;
    std::vector<double> sigma;

    std::size_t size() const { return t.size(); }
    std::span<const double> distance() const { return t; }
};

inline RayMarchSamples march_ray(const DensityVolume &vol, const Ray &ray, std::size_t samples) {
    if (samples == 0) {
        throw DomainError("march_ray: sample count must be at least 1");
    }
    RayMarchSamples out;
    out.t.resize(samples);
    out.delta.resize(samples);
    out.point.resize(samples);
    out.sigma.resize(samples);
    const double span = ray.degenerate() ? 0.0 : ray.t_far - ray.t_near;
    const double step = span / static_cast<double>(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        const double t = ray.t_near + (static_cast<double>(i) + 0.5) * step;
        out.t[i] = t;
        out.delta[i] = step;
        out.point[i] = ray.at(t);
        out.sigma[i] = step > 0.0 ? sample_density(vol, out.point[i]) : 0.0;
    }
    return out;
}

struct Composite {
    double depth = 0.0;    // raw: sum of w_i d_i, not divided by opacity
    double opacity = 0.0;  // sum of w_i
    std::vector<double> weights;        // w_i = T_i alpha_i
    std::vector<double> transmittance;  // T_i
    std::vector<double> alpha;
};

/// Alpha compositing with transmittance accumulated in log space.
inline Composite composite(const RayMarchSamples &s) {
    const std::size_t n = s.size();
    if (s.delta.size() != n || s.sigma.size() != n) {
        throw DomainError("composite: inconsistent sample arrays");
    }
    Composite c;
    c.weights.resize(n);
    c.transmittance.resize(n);
    c.alpha.resize(n);
    double log_t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(s.sigma[i] >= 0.0) || !(s.delta[i] >= 0.0)) {
            throw DomainError("composite: negative density or segment length at sample " + std::to_string(i));
        }
        const double tau = s.sigma[i] * s.delta[i];
        const double trans = std::exp(log_t);
        const double a = -std::expm1(-tau);
        c.transmittance[i] = trans;
        c.alpha[i] = a;
        c.weights[i] = trans * a;
        c.depth += c.weights[i] * s.t[i];
        c.opacity += c.weights[i];
        log_t -= tau;
    }
    c.opacity = std::min(c.opacity, 1.0);  // rounding can overshoot 1 - T by an ulp
    return c;
}

/// Bilinear lookup at fractional satellite pixel coordinates, clamped to
/// the image edge. Pixel centers sit at integer + 0.5.
inline Rgb bilinear(const Image &img, SatellitePixel px) {
    const double max_r = static_cast<double>(img.height() - 1);
    const double max_c = static_cast<double>(img.width() - 1);
    const double fr = std::clamp(px.row - 0.5, 0.0, max_r);
    const double fc = std::clamp(px.col - 0.5, 0.0, max_c);
    const auto r0 = static_cast<std::size_t>(fr);
    const auto c0 = static_cast<std::size_t>(fc);
    const std::size_t r1 = std::min(r0 + 1, img.height() - 1);
    const std::size_t c1 = std::min(c0 + 1, img.width() - 1);
    const double tr = fr - static_cast<double>(r0);
    const double tc = fc - static_cast<double>(c0);
    double ch[3];
    for (std::size_t k = 0; k < 3; ++k) {
        const double top = (1.0 - tc) * img(r0, c0, k) + tc * img(r0, c1, k);
        const double bot = (1.0 - tc) * img(r1, c0, k) + tc * img(r1, c1, k);
        ch[k] = (1.0 - tr) * top + tr * bot;
    }
    return {ch[0], ch[1], ch[2]};
}

inline void check_satellite_image(const Image &sat, const SatelliteCamera &cam) {
    if (sat.channels() != 3 || sat.height() != cam.height || sat.width() != cam.width) {
        throw DomainError("satellite image " + shape_string(sat) + " does not match camera " +
                          std::to_string(cam.height) + "x" + std::to_string(cam.width) + "x3");
    }
}

/// Copy-paste color: composites satellite colors sampled beneath each
/// sample point with the compositing weights.
inline Rgb copy_paste_color(const RayMarchSamples &s, std::span<const double> weights, const Image &sat,
                            const SatelliteCamera &cam) {
    if (weights.size() != s.size()) {
        throw DomainError("copy_paste_color: " + std::to_string(s.size()) + " samples but " +
                          std::to_string(weights.size()) + " weights");
    }
    check_satellite_image(sat, cam);
    Rgb out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (weights[i] == 0.0) {
            continue;
        }
        const Rgb c = bilinear(sat, world_to_satellite_pixel(cam, s.point[i]));
        out.r += weights[i] * c.r;
        out.g += weights[i] * c.g;
        out.b += weights[i] * c.b;
    }
    return out;
}

struct RenderBuffers {
    Image depth;    // h x w x 1, meters, raw
    Image opacity;  // h x w x 1
    Image color;    // h x w x 3
    std::vector<double> weights;  // optional, h*w*S in row-major pixel order

    /// depth / opacity where opacity > 1e-3, else 0. Visualization only.
    Image expected_depth() const {
        Image out(depth.height(), depth.width(), 1);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double o = opacity.values()[i];
            out.values()[i] = o > 1e-3 ? depth.values()[i] / o : 0.0;
        }
        return out;
    }
};

struct RenderOptions {
    std::size_t samples = kDefaultSamplesPerRay;
    Threads threads{};
    bool keep_weights = false;
};

/// Everything needed to evaluate a ray against one scene: the volume and the
/// satellite image whose colors get copied.
struct SceneView {
    const DensityVolume &volume;
    const Image &satellite;
    const SatelliteCamera &sat_cam;

    void validate() const {
        check_satellite_image(satellite, sat_cam);
        const WorldFrame &f = volume.frame();
        // Volumes read from disk carry f32 extents.
        const double tol = 1e-6 * std::max(f.extent_e, f.extent_n);
        if (std::abs(sat_cam.scale_e * static_cast<double>(sat_cam.width) - f.extent_e) > tol ||
            std::abs(sat_cam.scale_n * static_cast<double>(sat_cam.height) - f.extent_n) > tol) {
            throw DomainError("satellite camera footprint does not match the volume's world frame");
        }
    }
};

struct RayRender {
    double depth = 0.0;
    double opacity = 0.0;
    Rgb color;
};

namespace detail {

// Per-worker scratch for one ray, reused across rays.
struct RayScratch {
    std::vector<double> t, tau, trans_after, weight;
    std::vector<Rgb> color;
    std::vector<Stencil> stencil;
    std::vector<char> inside;
    std::size_t used = 0;  // samples actually marched

    void resize(std::size_t n) {
        t.resize(n);
        tau.resize(n);
        trans_after.resize(n);
        weight.resize(n);
        color.resize(n);
        stencil.resize(n);
        inside.resize(n);
    }
};

// Forward pass for one ray; leaves per-sample data in `sc` for a backward
// pass. Marching stops once transmittance drops below exp(-kLogCutoff); the
// skipped samples keep zero weight.
inline constexpr double kLogCutoff = 60.0;

enum class ColorMode { none, weighted, all };

inline RayRender trace(const SceneView &scene, const Ray &ray, std::size_t samples, RayScratch &sc,
                       ColorMode colors = ColorMode::weighted) {
    sc.resize(samples);
    RayRender out;
    std::fill(sc.weight.begin(), sc.weight.end(), 0.0);
    std::fill(sc.inside.begin(), sc.inside.end(), 0);
    if (ray.degenerate()) {
        std::fill(sc.tau.begin(), sc.tau.end(), 0.0);
        std::fill(sc.trans_after.begin(), sc.trans_after.end(), 1.0);
        std::fill(sc.t.begin(), sc.t.end(), ray.t_near);
        sc.used = 0;
        return out;
    }
    const double step = (ray.t_far - ray.t_near) / static_cast<double>(samples);
    double log_t = 0.0;
    double trans = 1.0;
    std::size_t i = 0;
    for (; i < samples && log_t > -kLogCutoff; ++i) {
        const double t = ray.t_near + (static_cast<double>(i) + 0.5) * step;
        const Vec3 p = ray.at(t);
        sc.t[i] = t;
        double sigma = 0.0;
        sc.inside[i] = scene.volume.stencil(p, sc.stencil[i]) ? 1 : 0;
        if (sc.inside[i]) {
            sigma = scene.volume.evaluate(sc.stencil[i]);
        }
        const double tau = sigma * step;
        sc.tau[i] = tau;
        double w = 0.0;
        if (tau > 0.0) {
            // log T is tracked for the cutoff; T itself as a running product.
            log_t -= tau;
            const double em = std::expm1(-tau);
            w = -trans * em;
            trans *= 1.0 + em;
        }
        sc.trans_after[i] = trans;
        sc.weight[i] = w;
        if (colors == ColorMode::all || (colors == ColorMode::weighted && w != 0.0)) {
            sc.color[i] = bilinear(scene.satellite, world_to_satellite_pixel(scene.sat_cam, p));
        }
        if (w == 0.0) {
            continue;
        }
        out.depth += w * t;
        out.opacity += w;
        if (colors != ColorMode::none) {
            const Rgb &c = sc.color[i];
            out.color.r += w * c.r;
            out.color.g += w * c.g;
            out.color.b += w * c.b;
        }
    }
    sc.used = i;
    out.opacity = std::min(out.opacity, 1.0);
    return out;
}

} // namespace detail

/// Upstream derivatives of a scalar loss with respect to one ray's outputs.
struct RayAdjoint {
    double depth = 0.0;
    double opacity = 0.0;
    Rgb color;

    bool uses_color() const { return color.r != 0.0 || color.g != 0.0 || color.b != 0.0; }
};

inline std::vector<RayRender> render_rays(const SceneView &scene, std::span<const Ray> rays, std::size_t samples,
                                          Threads threads = {}) {
    if (samples == 0) {
        throw DomainError("render: sample count must be at least 1");
    }
    scene.validate();
    std::vector<RayRender> out(rays.size());
    parallel_range(rays.size(), threads, [&](std::size_t begin, std::size_t end) {
        detail::RayScratch sc;
        for (std::size_t r = begin; r < end; ++r) {
            out[r] = detail::trace(scene, rays[r], samples, sc);
        }
    });
    return out;
}

/// Number of partial accumulators used when scattering gradients. Fixed so
/// that the summation order, and therefore the result, does not depend on
/// the worker count.
inline constexpr std::size_t kGradientReductionBlocks = 8;

struct RenderWithGradient {
    std::vector<RayRender> outputs;
    std::vector<double> gradient;  // per stored node; zero on the pinned layer
};

/// Renders every ray and, in the same pass, back-propagates the adjoint that
/// `adjoint_of(ray_index, output)` returns for it. The adjoint of a ray may
/// only depend on that ray's own output.
///
/// With tau_i = sigma_i delta_i and v_i the adjoint-weighted value carried by
/// sample i, the ray loss is sum_i w_i v_i and
///   dL/dtau_k = v_k T_{k+1} - sum_{i>k} w_i v_i,
/// which needs no division by (1 - alpha). The sigma derivative is then
/// scattered to the grid through the trilinear weights.
template <typename AdjointFn>
RenderWithGradient render_and_backprop(const SceneView &scene, std::span<const Ray> rays, std::size_t samples,
                                       Threads threads, AdjointFn &&adjoint_of, bool color_adjoint = true) {
    if (samples == 0) {
        throw DomainError("ray_gradients: sample count must be at least 1");
    }
    scene.validate();
    const std::size_t nodes = scene.volume.node_count();
    const std::size_t blocks = std::min(kGradientReductionBlocks, std::max<std::size_t>(rays.size(), 1));
    RenderWithGradient result{std::vector<RayRender>(rays.size()), {}};
    std::vector<std::vector<double>> partial(blocks);
    const std::size_t per_block = (rays.size() + blocks - 1) / blocks;
    parallel_blocks(blocks, threads, [&](std::size_t b) {
        std::vector<double> &acc = partial[b];
        acc.assign(nodes, 0.0);
        detail::RayScratch sc;
        std::vector<double> value(samples);
        const std::size_t begin = std::min(rays.size(), b * per_block);
        const std::size_t end = std::min(rays.size(), begin + per_block);
        for (std::size_t r = begin; r < end; ++r) {
            const Ray &ray = rays[r];
            RayRender &out = result.outputs[r];
            out = detail::trace(scene, ray, samples, sc,
                                color_adjoint ? detail::ColorMode::all : detail::ColorMode::weighted);
            if (ray.degenerate()) {
                continue;
            }
            const RayAdjoint adj = adjoint_of(r, std::as_const(out));
            const bool color = adj.uses_color();
            if (color && !color_adjoint) {
                throw DomainError("render_and_backprop: color adjoint given but color_adjoint is off");
            }
            const std::size_t used = sc.used;
            for (std::size_t i = 0; i < used; ++i) {
                double v = adj.depth * sc.t[i] + adj.opacity;
                if (color) {
                    v += adj.color.r * sc.color[i].r + adj.color.g * sc.color[i].g + adj.color.b * sc.color[i].b;
                }
                value[i] = v;
            }
            const double step = (ray.t_far - ray.t_near) / static_cast<double>(samples);
            double suffix = 0.0;
            for (std::size_t k = used; k-- > 0;) {
                const double d_tau = value[k] * sc.trans_after[k] - suffix;
                suffix += sc.weight[k] * value[k];
                if (!sc.inside[k]) {
                    continue;
                }
                const double d_sigma = d_tau * step;
                const Stencil &st = sc.stencil[k];
                for (int c = 0; c < 8; ++c) {
                    if (!st.pinned[c]) {
                        acc[st.node[c]] += d_sigma * st.weight[c];
                    }
                }
            }
        }
    });
    result.gradient.assign(nodes, 0.0);
    for (const auto &acc : partial) {
        for (std::size_t i = 0; i < nodes; ++i) {
            result.gradient[i] += acc[i];
        }
    }
    return result;
}

/// Reverse-mode derivative of sum_r <adjoint_r, render(ray_r)> with respect
/// to every stored grid value. Pinned ground nodes receive zero.
inline std::vector<double> ray_gradients(const SceneView &scene, std::span<const Ray> rays,
                                         std::span<const RayAdjoint> adjoints, std::size_t samples,
                                         Threads threads = {}) {
    if (rays.size() != adjoints.size()) {
        throw DomainError("ray_gradients: " + std::to_string(rays.size()) + " rays but " +
                          std::to_string(adjoints.size()) + " adjoints");
    }
    return render_and_backprop(scene, rays, samples, threads,
                               [&](std::size_t r, const RayRender &) { return adjoints[r]; })
        .gradient;
}

inline RenderBuffers render_panorama(const DensityVolume &vol, const Image &sat, const SatelliteCamera &sat_cam,
                                     const PanoramaCamera &pano, const RenderOptions &opt = {}) {
    pano.validate();
    const SceneView scene{vol, sat, sat_cam};
    const std::vector<Ray> rays = panorama_ray_grid(pano, vol.frame());
    RenderBuffers buf;
    buf.depth = Image(pano.height, pano.width, 1);
    buf.opacity = Image(pano.height, pano.width, 1);
    buf.color = Image(pano.height, pano.width, 3);
    if (opt.keep_weights) {
        buf.weights.resize(rays.size() * opt.samples);
    }
    if (opt.samples == 0) {
        throw DomainError("render_panorama: sample count must be at least 1");
    }
    scene.validate();
    parallel_range(rays.size(), opt.threads, [&](std::size_t begin, std::size_t end) {
        detail::RayScratch sc;
        for (std::size_t r = begin; r < end; ++r) {
            const RayRender px = detail::trace(scene, rays[r], opt.samples, sc);
            buf.depth.values()[r] = px.depth;
            buf.opacity.values()[r] = px.opacity;
            buf.color.values()[3 * r] = px.color.r;
            buf.color.values()[3 * r + 1] = px.color.g;
            buf.color.values()[3 * r + 2] = px.color.b;
            if (opt.keep_weights) {
                std::copy(sc.weight.begin(), sc.weight.end(), buf.weights.begin() + r * opt.samples);
            }
        }
    });
    return buf;
}

/// Per-pixel adjoint maps; an empty image means zero for that output.
struct RenderAdjoint {
    Image depth;
    Image opacity;
    Image color;
};

inline std::vector<double> render_gradients(const DensityVolume &vol, const Image &sat, const SatelliteCamera &sat_cam,
                                            const PanoramaCamera &pano, const RenderAdjoint &adjoint,
                                            const RenderOptions &opt = {}) {
    pano.validate();
    const auto check = [&](const Image &img, std::size_t channels, const char *name) {
        if (!img.empty() && (img.height() != pano.height || img.width() != pano.width || img.channels() != channels)) {
            throw DomainError(std::string("render_gradients: ") + name + " adjoint " + shape_string(img) +
                              " does not match the panorama");
        }
    };
    check(adjoint.depth, 1, "depth");
    check(adjoint.opacity, 1, "opacity");
    check(adjoint.color, 3, "color");
    const std::vector<Ray> rays = panorama_ray_grid(pano, vol.frame());
    std::vector<RayAdjoint> adj(rays.size());
    for (std::size_t r = 0; r < rays.size(); ++r) {
        if (!adjoint.depth.empty()) {
            adj[r].depth = adjoint.depth.values()[r];
        }
        if (!adjoint.opacity.empty()) {
            adj[r].opacity = adjoint.opacity.values()[r];
        }
        if (!adjoint.color.empty()) {
            adj[r].color = {adjoint.color.values()[3 * r], adjoint.color.values()[3 * r + 1],
                            adjoint.color.values()[3 * r + 2]};
        }
    }
    return ray_gradients(SceneView{vol, sat, sat_cam}, rays, adj, opt.samples, opt.threads);
}

inline std::vector<RenderBuffers> render_trajectory(const DensityVolume &vol, const Image &sat,
                                                    const SatelliteCamera &sat_cam,
                                                    std::span<const PanoramaCamera> path,
                                                    const RenderOptions &opt = {}) {
    if (path.empty()) {
        throw DomainError("render_trajectory: empty camera path");
    }
    std::vector<RenderBuffers> frames;
    frames.reserve(path.size());
    for (const PanoramaCamera &cam : path) {
        frames.push_back(render_panorama(vol, sat, sat_cam, cam, opt));
    }
    return frames;
}

} // namespace panovol
