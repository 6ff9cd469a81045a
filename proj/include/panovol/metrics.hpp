// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panovol/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace panovol {

/// PSNR reported for (near-)identical images.
inline constexpr double kPsnrCap = 99.0;

/// 20 log10(peak / rmse), capped at kPsnrCap.
inline double psnr_from_rmse(double rmse, double peak = 255.0) {
    if (rmse < peak * std::pow(10.0, -kPsnrCap / 20.0)) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 20.0 * std::log10(peak / rmse));
}

struct RmsePsnr {
    double rmse = 0.0;
    double psnr = kPsnrCap;
};

/// Inputs on a 0..255 scale.
inline RmsePsnr rmse_psnr(const Image &a, const Image &b) {
    require_same_shape(a, b, "rmse_psnr");
    if (a.empty()) {
        throw DomainError("rmse_psnr: empty images");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        sum += d * d;
    }
    const double rmse = std::sqrt(sum / static_cast<double>(a.size()));
    return {rmse, psnr_from_rmse(rmse)};
}

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 255.0;
};

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::vector<double> gaussian_taps(std::size_t window, double sigma) {
    std::vector<double> taps(window);
    const double mid = 0.5 * static_cast<double>(window - 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        const double x = static_cast<double>(i) - mid;
        taps[i] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (double &t : taps) {
        t /= sum;
    }
    return taps;
}

namespace detail {

// Valid-mode separable filtering of one channel.
inline std::vector<double> filter_valid(const std::vector<double> &src, std::size_t h, std::size_t w,
                                        const std::vector<double> &taps) {
    const std::size_t k = taps.size();
    const std::size_t oh = h - k + 1;
    const std::size_t ow = w - k + 1;
    std::vector<double> rows(h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                s += taps[t] * src[y * w + x + t];
            }
            rows[y * ow + x] = s;
        }
    }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                s += taps[t] * rows[(y + t) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    return out;
}

} // namespace detail

/// Gaussian-windowed SSIM, mean over all fully-covered window positions,
/// averaged over channels.
inline double ssim(const Image &a, const Image &b, const SsimParams &p = {}) {
    require_same_shape(a, b, "ssim");
    const std::size_t h = a.height(), w = a.width(), ch = a.channels();
    if (p.window == 0 || h < p.window || w < p.window) {
        throw DomainError("ssim: image " + shape_string(a) + " smaller than the " + std::to_string(p.window) +
                          "-pixel window");
    }
    const auto taps = gaussian_taps(p.window, p.sigma);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    double total = 0.0;
    std::vector<double> x(h * w), y(h * w), xx(h * w), yy(h * w), xy(h * w);
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t i = 0; i < h * w; ++i) {
            x[i] = a.values()[i * ch + c];
            y[i] = b.values()[i * ch + c];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = detail::filter_valid(x, h, w, taps);
        const auto my = detail::filter_valid(y, h, w, taps);
        const auto sxx = detail::filter_valid(xx, h, w, taps);
        const auto syy = detail::filter_valid(yy, h, w, taps);
        const auto sxy = detail::filter_valid(xy, h, w, taps);
        double sum = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += sum / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(ch);
}

/// Gradient magnitude |a(y, x+1) - a(y, x)| + |a(y+1, x) - a(y, x)| over
/// the (h-1) x (w-1) positions where both forward differences exist.
inline Image gradient_magnitude(const Image &a) {
    const std::size_t h = a.height(), w = a.width(), ch = a.channels();
    Image g(h - 1, w - 1, ch);
    for (std::size_t y = 0; y + 1 < h; ++y) {
        for (std::size_t x = 0; x + 1 < w; ++x) {
            for (std::size_t c = 0; c < ch; ++c) {
                g(y, x, c) = std::abs(a(y, x + 1, c) - a(y, x, c)) + std::abs(a(y + 1, x, c) - a(y, x, c));
            }
        }
    }
    return g;
}

/// PSNR between the gradient-magnitude maps of two images; insensitive to
/// brightness offsets.
inline double sharpness_difference(const Image &a, const Image &b) {
    require_same_shape(a, b, "sharpness_difference");
    if (a.height() < 2 || a.width() < 2) {
        throw DomainError("sharpness_difference: images must be at least 2x2");
    }
    return rmse_psnr(gradient_magnitude(a), gradient_magnitude(b)).psnr;
}

struct MetricReport {
    double rmse = 0.0;
    double psnr = kPsnrCap;
    double ssim = 1.0;
    double sd = kPsnrCap;
    std::vector<double> channel_rmse;
    std::vector<double> channel_psnr;
    std::vector<double> channel_ssim;
    std::vector<double> channel_sd;
};

inline Image extract_channel(const Image &img, std::size_t c) {
    Image out(img.height(), img.width(), 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] = img.values()[i * img.channels() + c];
    }
    return out;
}

/// All metrics on 0..255-scaled inputs. SSIM is skipped (reported as NaN)
/// when the image is smaller than the window.
inline MetricReport compare_images(const Image &a, const Image &b, const SsimParams &p = {}) {
    require_same_shape(a, b, "compare_images");
    MetricReport r;
    const auto rp = rmse_psnr(a, b);
    r.rmse = rp.rmse;
    r.psnr = rp.psnr;
    const bool ssim_ok = a.height() >= p.window && a.width() >= p.window;
    r.ssim = ssim_ok ? ssim(a, b, p) : std::nan("");
    r.sd = sharpness_difference(a, b);
    for (std::size_t c = 0; c < a.channels(); ++c) {
        const Image ac = extract_channel(a, c);
        const Image bc = extract_channel(b, c);
        const auto cp = rmse_psnr(ac, bc);
        r.channel_rmse.push_back(cp.rmse);
        r.channel_psnr.push_back(cp.psnr);
        r.channel_ssim.push_back(ssim_ok ? ssim(ac, bc, p) : std::nan(""));
        r.channel_sd.push_back(sharpness_difference(ac, bc));
    }
    return r;
}

/// Multiplies every value by `factor` (e.g. 255 for [0,1] images).
inline Image scaled(const Image &img, double factor) {
    Image out = img;
    for (double &v : out.values()) {
        v *= factor;
    }
    return out;
}

} // namespace panovol
