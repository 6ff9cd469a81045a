// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panovol/core.hpp"
#include "panovol/render.hpp"
#include "panovol/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace panovol {

/// Per-pixel sky / non-sky partition of a panorama.
class SkyMask {
  public:
    SkyMask() = default;
    SkyMask(std::size_t height, std::size_t width, bool sky = false)
        : height_(height), width_(width), sky_(height * width, sky ? 1 : 0) {}

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t size() const { return sky_.size(); }
    bool empty() const { return sky_.empty(); }

    bool sky(std::size_t index) const { return sky_[index] != 0; }
    bool sky(std::size_t y, std::size_t x) const { return sky_[y * width_ + x] != 0; }
    void set(std::size_t y, std::size_t x, bool value) { sky_[y * width_ + x] = value ? 1 : 0; }
    void set(std::size_t index, bool value) { sky_[index] = value ? 1 : 0; }

    std::size_t sky_count() const { return static_cast<std::size_t>(std::count(sky_.begin(), sky_.end(), 1)); }
    std::size_t ground_count() const { return size() - sky_count(); }

    bool matches(const Image &img) const { return img.height() == height_ && img.width() == width_; }

    /// Training pairs need both regions.
    void validate_for_training() const {
        if (sky_count() == 0 || ground_count() == 0) {
            throw DomainError("sky mask: training masks need at least one sky and one non-sky pixel");
        }
    }

    Image to_image() const {
        Image img(height_, width_, 1);
        for (std::size_t i = 0; i < size(); ++i) {
            img.values()[i] = sky(i) ? 1.0 : 0.0;
        }
        return img;
    }

    static SkyMask from_image(const Image &img) {
        SkyMask m(img.height(), img.width());
        for (std::size_t i = 0; i < m.size(); ++i) {
            m.sky_[i] = img.values()[i * img.channels()] >= 0.5 ? 1 : 0;
        }
        return m;
    }

    friend bool operator==(const SkyMask &, const SkyMask &) = default;

  private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> sky_;
};

struct LossWeights {
    double l1 = 1.0;
    double l2 = 10.0;
    double snop = 1.0;
    double smooth = 1e-2;

    void validate() const {
        for (double w : {l1, l2, snop, smooth}) {
            if (!(w >= 0.0) || !std::isfinite(w)) {
                throw DomainError("loss weights must be finite and non-negative");
            }
        }
    }
};

struct MapLoss {
    double value = 0.0;
    Image gradient;
};

namespace detail {
inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
} // namespace detail

/// d snop / d opacity for one pixel, given the region sizes.
inline double snop_pixel_gradient(double opacity, bool sky, std::size_t n_sky, std::size_t n_ground) {
    return sky ? detail::sign0(opacity) / static_cast<double>(n_sky)
               : detail::sign0(opacity - 1.0) / static_cast<double>(n_ground);
}

/// d/d pred of (w_l1 |pred - target| + w_l2 (pred - target)^2) / count.
inline double l1_l2_pixel_gradient(double pred, double target, const LossWeights &w, std::size_t count) {
    const double d = pred - target;
    return (w.l1 * detail::sign0(d) + 2.0 * w.l2 * d) / static_cast<double>(count);
}

/// Non-sky opacity loss: mean |O - 1| over non-sky pixels plus mean |O|
/// over sky pixels. An empty region contributes nothing. The gradient is
/// the subgradient with value 0 at the kink.
inline MapLoss snop_loss(const Image &opacity, const SkyMask &mask) {
    if (!mask.matches(opacity) || opacity.channels() != 1) {
        throw DomainError("snop_loss: opacity " + shape_string(opacity) + " vs mask " + std::to_string(mask.height()) +
                          "x" + std::to_string(mask.width()));
    }
    MapLoss out{0.0, Image(opacity.height(), opacity.width(), 1)};
    const std::size_t n_sky = mask.sky_count();
    const std::size_t n_ground = mask.size() - n_sky;
    double sky_sum = 0.0;
    double ground_sum = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const double o = opacity.values()[i];
        if (mask.sky(i)) {
            sky_sum += std::abs(o);
        } else {
            ground_sum += std::abs(o - 1.0);
        }
        out.gradient.values()[i] = snop_pixel_gradient(o, mask.sky(i), n_sky, n_ground);
    }
    if (n_ground > 0) {
        out.value += ground_sum / static_cast<double>(n_ground);
    }
    if (n_sky > 0) {
        out.value += sky_sum / static_cast<double>(n_sky);
    }
    return out;
}

/// Reconstruction targets; any subset may be present.
struct ReconTargets {
    std::optional<Image> depth;
    std::optional<Image> opacity;
    std::optional<Image> color;

    bool empty() const { return !depth && !opacity && !color; }
};

struct ReconLoss {
    double value = 0.0;
    double depth = 0.0;
    double opacity = 0.0;
    double color = 0.0;
    RenderAdjoint adjoint;
};

namespace detail {

// w_l1 * mean|p - t| + w_l2 * mean (p - t)^2 over pixels where `valid`
// holds, all channels included. Writes d/dp into `grad`.
inline double l1_l2(const Image &pred, const Image &target, const LossWeights &w, const SkyMask *valid_when_ground,
                    Image &grad, const char *name) {
    require_same_shape(pred, target, name);
    grad = Image(pred.height(), pred.width(), pred.channels());
    const std::size_t pixels = pred.height() * pred.width();
    const std::size_t ch = pred.channels();
    std::size_t count = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
        if (!valid_when_ground || !valid_when_ground->sky(p)) {
            count += ch;
        }
    }
    if (count == 0) {
        return 0.0;
    }
    const double inv = 1.0 / static_cast<double>(count);
    double l1 = 0.0;
    double l2 = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
        if (valid_when_ground && valid_when_ground->sky(p)) {
            continue;
        }
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = p * ch + c;
            const double d = pred.values()[i] - target.values()[i];
            l1 += std::abs(d);
            l2 += d * d;
            grad.values()[i] = l1_l2_pixel_gradient(pred.values()[i], target.values()[i], w, count);
        }
    }
    return (w.l1 * l1 + w.l2 * l2) * inv;
}

} // namespace detail

/// Sum over the provided channels of w_l1 * mean|pred - target| +
/// w_l2 * mean (pred - target)^2. With `ground_only` set, sky pixels are
/// excluded from the means: depth and color are undefined there.
inline ReconLoss recon_loss(const RenderBuffers &pred, const ReconTargets &targets, const LossWeights &w,
                            const SkyMask *ground_only = nullptr) {
    if (targets.empty()) {
        throw DomainError("recon_loss: no reconstruction targets provided");
    }
    if (ground_only && !ground_only->matches(pred.opacity)) {
        throw DomainError("recon_loss: mask does not match the prediction");
    }
    ReconLoss out;
    if (targets.depth) {
        out.depth = detail::l1_l2(pred.depth, *targets.depth, w, ground_only, out.adjoint.depth, "recon_loss depth");
    }
    if (targets.opacity) {
        out.opacity =
            detail::l1_l2(pred.opacity, *targets.opacity, w, ground_only, out.adjoint.opacity, "recon_loss opacity");
    }
    if (targets.color) {
        out.color = detail::l1_l2(pred.color, *targets.color, w, ground_only, out.adjoint.color, "recon_loss color");
    }
    out.value = out.depth + out.opacity + out.color;
    return out;
}

struct VolumeLoss {
    double value = 0.0;
    std::vector<double> gradient;  // per stored node; zero on the pinned layer
};

/// w_smooth * mean of squared forward differences along all three grid
/// axes. Differences touching the pinned ground layer are skipped.
inline VolumeLoss smoothness_loss(const DensityVolume &vol, double w_smooth) {
    VolumeLoss out;
    out.gradient.assign(vol.node_count(), 0.0);
    const auto v = vol.values();
    const std::size_t nx = vol.nx(), ny = vol.ny(), nz = vol.nz();
    std::size_t count = 0;
    if (nx > 1) count += (nx - 1) * ny * (nz - 1);
    if (ny > 1) count += nx * (ny - 1) * (nz - 1);
    count += nx * ny * (nz - 2);
    if (count == 0 || w_smooth == 0.0) {
        return out;
    }
    const double scale = w_smooth / static_cast<double>(count);
    double sum = 0.0;
    auto diff = [&](std::size_t a, std::size_t b) {
        const double d = v[b] - v[a];
        sum += d * d;
        out.gradient[b] += 2.0 * scale * d;
        out.gradient[a] -= 2.0 * scale * d;
    };
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            for (std::size_t k = 1; k < nz; ++k) {
                const std::size_t here = vol.flat(i, j, k);
                if (i + 1 < nx) diff(here, vol.flat(i + 1, j, k));
                if (j + 1 < ny) diff(here, vol.flat(i, j + 1, k));
                if (k + 1 < nz) diff(here, here + 1);
            }
        }
    }
    out.value = scale * sum;
    return out;
}

inline constexpr std::size_t kSkyHistogramBins = 90;

/// Per-channel histogram of sky colors, each channel normalized to sum 1.
/// Layout: all red bins, then green, then blue.
struct SkyHistogram {
    std::size_t bins = kSkyHistogramBins;
    std::vector<double> mass;

    double at(std::size_t channel, std::size_t bin) const { return mass[channel * bins + bin]; }
};

/// Bin index is min(floor(value * bins), bins - 1) after clamping to [0, 1].
inline SkyHistogram sky_histogram(const Image &image, const SkyMask &mask, std::size_t bins = kSkyHistogramBins) {
    if (image.channels() != 3 || !mask.matches(image)) {
        throw DomainError("sky_histogram: image " + shape_string(image) + " does not match the mask");
    }
    if (bins == 0) {
        throw DomainError("sky_histogram: bin count must be positive");
    }
    const std::size_t n_sky = mask.sky_count();
    if (n_sky == 0) {
        throw DomainError("sky_histogram: panorama has no sky pixels");
    }
    SkyHistogram h{bins, std::vector<double>(3 * bins, 0.0)};
    std::vector<std::size_t> counts(3 * bins, 0);
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask.sky(p)) {
            continue;
        }
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = std::clamp(image.values()[p * 3 + c], 0.0, 1.0);
            const auto b = std::min(static_cast<std::size_t>(std::floor(v * static_cast<double>(bins))), bins - 1);
            ++counts[c * bins + b];
        }
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        h.mass[i] = static_cast<double>(counts[i]) / static_cast<double>(n_sky);
    }
    return h;
}

} // namespace panovol
