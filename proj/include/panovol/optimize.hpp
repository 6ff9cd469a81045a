// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panovol/camera.hpp"
#include "panovol/core.hpp"
#include "panovol/metrics.hpp"
#include "panovol/parallel.hpp"
#include "panovol/render.hpp"
#include "panovol/supervise.hpp"
#include "panovol/volume.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace panovol {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Thrown when the loss stops being finite.
class FitDivergence : public DomainError {
  public:
    FitDivergence(std::size_t step, const std::string &what) : DomainError(what), step_(step) {}
    std::size_t step() const { return step_; }

  private:
    std::size_t step_;
};

struct FitConfig {
    std::size_t steps = 2000;
    double step_size = 5e-2;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    LossWeights weights;
    std::size_t samples_per_ray = kDefaultSamplesPerRay;
    std::size_t rays_per_step = 32768;  // all rays when there are at most this many
    std::uint64_t seed = 0;
    double init_density = 1e-2;         // softplus of the initial raw parameter
    std::size_t nx = 256, ny = 256, nz = 65;
    double max_height = 8.0;
    double ground_density = DensityVolume::kDefaultGroundDensity;
    bool recon_ground_only = true;      // reconstruction terms skip sky pixels when a mask is present
    Threads threads{};

    double init_raw() const { return inverse_softplus(init_density); }

    void validate() const {
        if (!(step_size > 0.0) || !std::isfinite(step_size)) {
            throw DomainError("fit config: step_size must be positive");
        }
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw DomainError("fit config: moment decays must lie in [0, 1)");
        }
        if (!(epsilon > 0.0)) {
            throw DomainError("fit config: epsilon must be positive");
        }
        if (samples_per_ray == 0 || rays_per_step == 0) {
            throw DomainError("fit config: samples_per_ray and rays_per_step must be positive");
        }
        if (!(init_density > 0.0)) {
            throw DomainError("fit config: init_density must be positive");
        }
        weights.validate();
    }
};

/// Ground side of one training or evaluation pair.
struct Observation {
    PanoramaCamera pano_cam;
    std::optional<SkyMask> sky_mask;
    ReconTargets targets;

    void validate() const {
        pano_cam.validate();
        if (targets.empty() && !sky_mask) {
            throw DomainError("observation: needs a sky mask or at least one target map");
        }
        auto check = [&](const std::optional<Image> &img, std::size_t ch, const char *name) {
            if (img && (img->height() != pano_cam.height || img->width() != pano_cam.width || img->channels() != ch)) {
                throw DomainError(std::string("observation: ") + name + " target " + shape_string(*img) +
                                  " does not match the panorama size");
            }
        };
        check(targets.depth, 1, "depth");
        check(targets.opacity, 1, "opacity");
        check(targets.color, 3, "color");
        if (sky_mask && (sky_mask->height() != pano_cam.height || sky_mask->width() != pano_cam.width)) {
            throw DomainError("observation: sky mask does not match the panorama size");
        }
    }
};

struct LossRecord {
    std::size_t step = 0;
    double total = 0.0;
    double snop = 0.0;
    double depth = 0.0;
    double opacity = 0.0;
    double color = 0.0;
    double smooth = 0.0;
};

struct FitResult {
    DensityVolume volume;
    std::vector<LossRecord> trace;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Ray subset for one step, drawn from a generator keyed on (seed, step).
inline std::vector<std::size_t> pick_rays(std::size_t total, std::size_t wanted, std::uint64_t seed,
                                          std::size_t step) {
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (total <= wanted) {
        return idx;
    }
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(step))));
    for (std::size_t i = 0; i < wanted; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (total - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(wanted);
    return idx;
}

struct TrainingRay {
    Ray ray;
    bool sky = false;
    bool has_mask = false;
    double depth = 0.0, opacity = 0.0;
    Rgb color;
};

} // namespace detail

inline DensityVolume volume_from_raw(const WorldFrame &frame, const FitConfig &cfg, const std::vector<double> &raw) {
    DensityVolume vol(frame, cfg.nx, cfg.ny, cfg.nz, 0.0, cfg.ground_density);
    std::vector<double> dens(raw.size());
    for (std::size_t f = 0; f < raw.size(); ++f) {
        dens[f] = vol.is_pinned(f) ? cfg.ground_density : softplus(raw[f]);
    }
    vol.assign(dens);
    return vol;
}

/// Fits a density volume to posed panorama observations by bias-corrected
/// adaptive-moment descent on raw parameters, density = softplus(raw).
///
/// Per step: a seeded ray subset is rendered, the non-sky opacity and
/// reconstruction losses are taken over that subset (as a 1 x K map), the
/// smoothness term over the whole grid, and all gradients flow back through
/// the analytic render adjoint.
inline FitResult fit_density(const Image &sat, const SatelliteCamera &sat_cam, const std::vector<Observation> &obs,
                             const FitConfig &cfg) {
    cfg.validate();
    if (obs.empty()) {
        throw DomainError("fit_density: at least one observation is required");
    }
    const WorldFrame frame = sat_cam.footprint(cfg.max_height);
    check_satellite_image(sat, sat_cam);

    bool any_mask = false, any_depth = false, any_opacity = false, any_color = false;
    std::vector<detail::TrainingRay> pool;
    for (std::size_t v = 0; v < obs.size(); ++v) {
        const Observation &o = obs[v];
        o.validate();
        any_mask |= o.sky_mask.has_value();
        any_depth |= o.targets.depth.has_value();
        any_opacity |= o.targets.opacity.has_value();
        any_color |= o.targets.color.has_value();
        const std::vector<Ray> rays = panorama_ray_grid(o.pano_cam, frame);
        for (std::size_t p = 0; p < rays.size(); ++p) {
            detail::TrainingRay tr;
            tr.ray = rays[p];
            tr.has_mask = o.sky_mask.has_value();
            tr.sky = tr.has_mask && o.sky_mask->sky(p);
            if (o.targets.depth) tr.depth = o.targets.depth->values()[p];
            if (o.targets.opacity) tr.opacity = o.targets.opacity->values()[p];
            if (o.targets.color) {
                const auto c = o.targets.color->values();
                tr.color = {c[3 * p], c[3 * p + 1], c[3 * p + 2]};
            }
            pool.push_back(tr);
        }
    }
    for (const Observation &o : obs) {
        if ((any_depth && !o.targets.depth) || (any_opacity && !o.targets.opacity) ||
            (any_color && !o.targets.color) || (any_mask && !o.sky_mask)) {
            throw DomainError("fit_density: all observations must provide the same set of targets");
        }
    }

    const std::size_t nodes = cfg.nx * cfg.ny * cfg.nz;
    std::vector<double> raw(nodes, cfg.init_raw());
    std::vector<double> m(nodes, 0.0), v2(nodes, 0.0);
    FitResult result{volume_from_raw(frame, cfg, raw), {}};
    result.trace.reserve(cfg.steps);
    const bool recon_active = (any_depth || any_opacity || any_color) && (cfg.weights.l1 > 0.0 || cfg.weights.l2 > 0.0);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const DensityVolume &vol = result.volume;
        const auto picked = detail::pick_rays(pool.size(), cfg.rays_per_step, cfg.seed, step);
        const std::size_t k = picked.size();
        std::vector<Ray> rays(k);
        for (std::size_t i = 0; i < k; ++i) {
            rays[i] = pool[picked[i]].ray;
        }
        const SceneView scene{vol, sat, sat_cam};

        // Region sizes over this step's subset fix every per-ray loss gradient
        // before rendering, so the adjoint can be applied in the same pass.
        std::size_t n_sky = 0;
        for (std::size_t i = 0; i < k; ++i) {
            n_sky += pool[picked[i]].sky ? 1 : 0;
        }
        const std::size_t n_ground = k - n_sky;
        const bool use_snop = any_mask && cfg.weights.snop > 0.0;
        const bool ground_only = any_mask && cfg.recon_ground_only;
        const std::size_t recon_pixels = ground_only ? n_ground : k;
        const LossWeights &w = cfg.weights;
        auto adjoint_of = [&](std::size_t i, const RayRender &out) {
            const detail::TrainingRay &tr = pool[picked[i]];
            RayAdjoint adj;
            if (use_snop) {
                adj.opacity += w.snop * snop_pixel_gradient(out.opacity, tr.sky, n_sky, n_ground);
            }
            if (recon_active && !(ground_only && tr.sky)) {
                if (any_depth) adj.depth += l1_l2_pixel_gradient(out.depth, tr.depth, w, recon_pixels);
                if (any_opacity) adj.opacity += l1_l2_pixel_gradient(out.opacity, tr.opacity, w, recon_pixels);
                if (any_color) {
                    adj.color.r += l1_l2_pixel_gradient(out.color.r, tr.color.r, w, 3 * recon_pixels);
                    adj.color.g += l1_l2_pixel_gradient(out.color.g, tr.color.g, w, 3 * recon_pixels);
                    adj.color.b += l1_l2_pixel_gradient(out.color.b, tr.color.b, w, 3 * recon_pixels);
                }
            }
            return adj;
        };
        RenderWithGradient pass = render_and_backprop(scene, std::span<const Ray>(rays), cfg.samples_per_ray,
                                                      cfg.threads, adjoint_of, any_color && recon_active);
        const std::vector<RayRender> &rendered = pass.outputs;

        RenderBuffers pred{Image(1, k, 1), Image(1, k, 1), Image(1, k, 3), {}};
        SkyMask mask(1, k);
        ReconTargets tgt;
        if (any_depth) tgt.depth = Image(1, k, 1);
        if (any_opacity) tgt.opacity = Image(1, k, 1);
        if (any_color) tgt.color = Image(1, k, 3);
        for (std::size_t i = 0; i < k; ++i) {
            const detail::TrainingRay &tr = pool[picked[i]];
            pred.depth(0, i) = rendered[i].depth;
            pred.opacity(0, i) = rendered[i].opacity;
            pred.color(0, i, 0) = rendered[i].color.r;
            pred.color(0, i, 1) = rendered[i].color.g;
            pred.color(0, i, 2) = rendered[i].color.b;
            mask.set(0, i, tr.sky);
            if (any_depth) (*tgt.depth)(0, i) = tr.depth;
            if (any_opacity) (*tgt.opacity)(0, i) = tr.opacity;
            if (any_color) {
                (*tgt.color)(0, i, 0) = tr.color.r;
                (*tgt.color)(0, i, 1) = tr.color.g;
                (*tgt.color)(0, i, 2) = tr.color.b;
            }
        }

        LossRecord rec;
        rec.step = step;
        if (use_snop) {
            rec.snop = w.snop * snop_loss(pred.opacity, mask).value;
        }
        if (recon_active) {
            const ReconLoss rl = recon_loss(pred, tgt, w, ground_only ? &mask : nullptr);
            rec.depth = rl.depth;
            rec.opacity = rl.opacity;
            rec.color = rl.color;
        }
        const VolumeLoss smooth = smoothness_loss(vol, w.smooth);
        rec.smooth = smooth.value;
        rec.total = rec.snop + rec.depth + rec.opacity + rec.color + rec.smooth;
        if (!std::isfinite(rec.total)) {
            throw FitDivergence(step, "fit_density: loss became non-finite at step " + std::to_string(step));
        }
        result.trace.push_back(rec);

        const std::vector<double> &grad = pass.gradient;
        const double t = static_cast<double>(step + 1);
        const double bc1 = 1.0 - std::pow(cfg.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, t);
        for (std::size_t f = 0; f < nodes; ++f) {
            if (f % cfg.nz == 0) {
                continue;
            }
            const double g = (grad[f] + smooth.gradient[f]) * sigmoid(raw[f]);
            m[f] = cfg.beta1 * m[f] + (1.0 - cfg.beta1) * g;
            v2[f] = cfg.beta2 * v2[f] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[f] / bc1;
            const double vhat = v2[f] / bc2;
            raw[f] -= cfg.step_size * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
        result.volume = volume_from_raw(frame, cfg, raw);
    }
    return result;
}

/// Metrics for one target channel. Depth RMSE is in meters; all other
/// fields use a 0..255 scale (depth mapped by 255 / footprint diagonal).
struct ChannelReport {
    std::string channel;
    MetricReport metrics;
};

struct ViewReport {
    std::vector<ChannelReport> channels;
    double mean_sky_opacity = 0.0;
    double mean_ground_opacity = 0.0;
    double ground_depth_rmse = 0.0;  // meters, non-sky pixels only
    RenderBuffers buffers;
};

struct FitReport {
    std::vector<ViewReport> views;
    std::vector<ChannelReport> mean;  // per-channel average over views
    double mean_sky_opacity = 0.0;
    double mean_ground_opacity = 0.0;
};

/// Depth maps are compared on a 0..255 scale spanning the footprint diagonal.
inline double depth_metric_scale(const WorldFrame &frame) { return 255.0 / frame.footprint_diagonal(); }

inline std::vector<ChannelReport> compare_channels(const RenderBuffers &pred, const ReconTargets &truth,
                                                   const WorldFrame &frame) {
    std::vector<ChannelReport> out;
    if (truth.depth) {
        const double s = depth_metric_scale(frame);
        MetricReport r = compare_images(scaled(pred.depth, s), scaled(*truth.depth, s));
        r.rmse /= s;
        for (double &c : r.channel_rmse) {
            c /= s;
        }
        out.push_back({"depth", r});
    }
    if (truth.opacity) {
        out.push_back({"opacity", compare_images(scaled(pred.opacity, 255.0), scaled(*truth.opacity, 255.0))});
    }
    if (truth.color) {
        out.push_back({"color", compare_images(scaled(pred.color, 255.0), scaled(*truth.color, 255.0))});
    }
    return out;
}

inline FitReport evaluate_fit(const DensityVolume &vol, const Image &sat, const SatelliteCamera &sat_cam,
                              const std::vector<Observation> &heldout, const RenderOptions &opt = {}) {
    if (heldout.empty()) {
        throw DomainError("evaluate_fit: no held-out observations");
    }
    FitReport report;
    for (const Observation &o : heldout) {
        o.validate();
        if (o.targets.empty()) {
            throw DomainError("evaluate_fit: held-out observation has no targets");
        }
        ViewReport view;
        view.buffers = render_panorama(vol, sat, sat_cam, o.pano_cam, opt);
        view.channels = compare_channels(view.buffers, o.targets, vol.frame());
        if (o.sky_mask) {
            const SkyMask &mask = *o.sky_mask;
            double sky = 0.0, ground = 0.0, derr = 0.0;
            for (std::size_t p = 0; p < mask.size(); ++p) {
                const double op = view.buffers.opacity.values()[p];
                if (mask.sky(p)) {
                    sky += op;
                } else {
                    ground += op;
                    if (o.targets.depth) {
                        const double d = view.buffers.depth.values()[p] - o.targets.depth->values()[p];
                        derr += d * d;
                    }
                }
            }
            const std::size_t ns = mask.sky_count(), ng = mask.ground_count();
            view.mean_sky_opacity = ns ? sky / static_cast<double>(ns) : 0.0;
            view.mean_ground_opacity = ng ? ground / static_cast<double>(ng) : 0.0;
            view.ground_depth_rmse = ng ? std::sqrt(derr / static_cast<double>(ng)) : 0.0;
        }
        report.views.push_back(std::move(view));
    }
    const double nv = static_cast<double>(report.views.size());
    for (const ViewReport &v : report.views) {
        report.mean_sky_opacity += v.mean_sky_opacity / nv;
        report.mean_ground_opacity += v.mean_ground_opacity / nv;
    }
    for (std::size_t c = 0; c < report.views.front().channels.size(); ++c) {
        ChannelReport avg{report.views.front().channels[c].channel, {}};
        avg.metrics.rmse = avg.metrics.psnr = avg.metrics.ssim = avg.metrics.sd = 0.0;
        for (const ViewReport &v : report.views) {
            if (v.channels.size() <= c || v.channels[c].channel != avg.channel) {
                throw DomainError("evaluate_fit: held-out views provide different target channels");
            }
            const MetricReport &m = v.channels[c].metrics;
            avg.metrics.rmse += m.rmse / nv;
            avg.metrics.psnr += m.psnr / nv;
            avg.metrics.ssim += m.ssim / nv;
            avg.metrics.sd += m.sd / nv;
        }
        report.mean.push_back(avg);
    }
    return report;
}

} // namespace panovol
