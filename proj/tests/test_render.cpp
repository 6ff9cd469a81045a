// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#include "panovol/render.hpp"
#include "panovol/supervise.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace panovol;

namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

Image uniform_image(std::size_t h, std::size_t w, Rgb c) {
    Image img(h, w, 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            img(y, x, 0) = c.r;
            img(y, x, 1) = c.g;
            img(y, x, 2) = c.b;
        }
    return img;
}

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    Image img(h, w, 3);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double &v : img.values()) v = u(rng);
    return img;
}

RayMarchSamples make_samples(std::vector<double> t, std::vector<double> delta, std::vector<double> sigma) {
    RayMarchSamples s;
    s.t = std::move(t);
    s.delta = std::move(delta);
    s.sigma = std::move(sigma);
    s.point.assign(s.t.size(), Vec3{});
    return s;
}

struct SmallScene {
    WorldFrame frame{12.8, 12.8, 4.0};
    DensityVolume volume;
    SatelliteCamera sat_cam;
    Image sat;

    SmallScene(std::size_t nx, std::size_t ny, std::size_t nz, std::uint64_t seed)
        : volume(frame, nx, ny, nz), sat_cam(SatelliteCamera::covering(frame, 16, 16)), sat(random_image(16, 16, seed)) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 5.0);
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < ny; ++j)
                for (std::size_t k = 0; k < nz; ++k) volume.set(i, j, k, u(rng));
    }
};

} // namespace

TEST(March, UniformMidpoints) {
    const DensityVolume vol(WorldFrame{40, 40, 20}, 4, 4, 3, 0.7);
    Ray r;
    r.origin = {0, 0, 5};
    r.direction = {0, 1, 0};
    r.t_near = 0.0;
    r.t_far = 10.0;
    const RayMarchSamples s = march_ray(vol, r, 5);
    ASSERT_EQ(s.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_DOUBLE_EQ(s.t[i], 1.0 + 2.0 * i);
        EXPECT_DOUBLE_EQ(s.delta[i], 2.0);
    }
    EXPECT_THROW(march_ray(vol, r, 0), DomainError);
}

TEST(March, DegenerateRayIsEmpty) {
    const DensityVolume vol(WorldFrame{}, 4, 4, 3, 0.7);
    const Ray r = panorama_pixel_to_ray(PanoramaCamera{{0, 0, 20}, 8, 16, 0.0}, vol.frame(), 3.0, 1.0);
    ASSERT_TRUE(r.degenerate());
    const RayMarchSamples s = march_ray(vol, r, 7);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_EQ(s.sigma[i], 0.0);
        EXPECT_EQ(s.delta[i], 0.0);
    }
}

TEST(March, ConstantFieldAboveGround) {
    const DensityVolume vol(WorldFrame{}, 8, 8, 9, 2.5);
    Ray r;
    r.origin = {0, 0, 4};
    r.direction = {1, 0, 0};
    r.t_far = 20.0;
    const RayMarchSamples s = march_ray(vol, r, 16);
    for (double sigma : s.sigma) EXPECT_DOUBLE_EQ(sigma, 2.5);
}

TEST(Composite, EmptySpace) {
    const Composite c = composite(make_samples({1, 2, 3}, {1, 1, 1}, {0, 0, 0}));
    EXPECT_EQ(c.opacity, 0.0);
    EXPECT_EQ(c.depth, 0.0);
    for (double w : c.weights) EXPECT_EQ(w, 0.0);
}

TEST(Composite, SingleSampleClosedForm) {
    const Composite c = composite(make_samples({3.0}, {0.5}, {10.0}));
    const double alpha = 1.0 - std::exp(-5.0);
    EXPECT_NEAR(c.opacity, 0.9932620530009145, 1e-15);
    EXPECT_NEAR(c.opacity, alpha, 1e-15);
    EXPECT_NEAR(c.depth, 2.9797861590027436, 1e-14);
}

TEST(Composite, FirstSurfaceWins) {
    const Composite c = composite(make_samples({1.0, 1.1}, {0.1, 0.1}, {1000.0, 1000.0}));
    EXPECT_NEAR(c.transmittance[1], std::exp(-100.0), 1e-50);
    EXPECT_NEAR(c.opacity, 1.0, 1e-15);
    EXPECT_NEAR(c.depth, 1.0, 1e-12);
}

TEST(Composite, RejectsNegativeInputs) {
    EXPECT_THROW(composite(make_samples({1.0}, {1.0}, {-1.0})), DomainError);
    EXPECT_THROW(composite(make_samples({1.0}, {-1.0}, {1.0})), DomainError);
}

TEST(Composite, Identities) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> us(0.0, 10.0), ud(0.0, 0.5);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 1 + rng() % 40;
        std::vector<double> t(n), d(n), s(n);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d[i] = ud(rng);
            t[i] = acc + 0.5 * d[i];
            acc += d[i];
            s[i] = (rng() % 3 == 0) ? 0.0 : us(rng);
        }
        const Composite c = composite(make_samples(t, d, s));
        double prod = 1.0, wsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            prod *= 1.0 - c.alpha[i];
            wsum += c.weights[i];
            EXPECT_LE(c.transmittance[i], i ? c.transmittance[i - 1] : 1.0);
        }
        EXPECT_NEAR(wsum, 1.0 - prod, 1e-10);
        EXPECT_GE(c.opacity, 0.0);
        EXPECT_LE(c.opacity, 1.0);
        EXPECT_GE(c.depth, 0.0);
        EXPECT_LE(c.depth, c.opacity * acc + 1e-12);
    }
}

TEST(Composite, RiemannRefinement) {
    // sigma(t) = 10 * t / L on [0, L]; halving the step should barely move the opacity.
    const double L = 1.0;
    auto opacity = [&](std::size_t n) {
        std::vector<double> t(n), d(n, L / n), s(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = (i + 0.5) * L / n;
            s[i] = 10.0 * t[i] / L;
        }
        return composite(make_samples(t, d, s)).opacity;
    };
    for (std::size_t n : {8u, 16u, 50u}) {
        EXPECT_LT(std::abs(opacity(n) - opacity(2 * n)), 1e-2);
    }
}

TEST(CopyPaste, UniformImageFactorsOut) {
    const Image red = uniform_image(8, 8, {1, 0, 0});
    const SatelliteCamera cam{8, 8, 1.0, 1.0};
    RayMarchSamples s = make_samples({1, 2, 3}, {1, 1, 1}, {0, 0, 0});
    s.point = {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}};
    const std::vector<double> w{0.5, 0.2, 0.1};
    const Rgb c = copy_paste_color(s, w, red, cam);
    EXPECT_NEAR(c.r, 0.8, 1e-15);
    EXPECT_EQ(c.g, 0.0);
    EXPECT_EQ(c.b, 0.0);
    const std::vector<double> zero{0, 0, 0};
    const Rgb z = copy_paste_color(s, zero, red, cam);
    EXPECT_EQ(z.r, 0.0);
    const std::vector<double> short_w{1.0};
    EXPECT_THROW(copy_paste_color(s, short_w, red, cam), DomainError);
}

TEST(CopyPaste, PixelCenterReproducesPixel) {
    Image checker(8, 8, 3);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
            for (std::size_t c = 0; c < 3; ++c) checker(y, x, c) = ((x + y) % 2) ? 0.9 : 0.1 * (c + 1);
    const SatelliteCamera cam{8, 8, 0.5, 0.5};
    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
            // Center of pixel (y, x) in world coordinates.
            const double n = (4.0 - (y + 0.5)) * 0.5;
            const double e = ((x + 0.5) - 4.0) * 0.5;
            RayMarchSamples s = make_samples({1}, {1}, {1});
            s.point = {{e, n, 0.3}};
            const Rgb c = copy_paste_color(s, std::vector<double>{1.0}, checker, cam);
            EXPECT_DOUBLE_EQ(c.r, checker(y, x, 0));
            EXPECT_DOUBLE_EQ(c.g, checker(y, x, 1));
            EXPECT_DOUBLE_EQ(c.b, checker(y, x, 2));
        }
    }
}

TEST(CopyPaste, OutsideFootprintClampsToEdge) {
    Image img = random_image(4, 4, 3);
    const SatelliteCamera cam{4, 4, 1.0, 1.0};
    const Rgb far = bilinear(img, world_to_satellite_pixel(cam, {100.0, 100.0, 0}));
    EXPECT_DOUBLE_EQ(far.r, img(0, 3, 0));
    EXPECT_DOUBLE_EQ(far.b, img(0, 3, 2));
}

TEST(Render, EmptyVolumeIsBlank) {
    const WorldFrame frame;
    DensityVolume vol(frame, 8, 8, 5, 0.0, 0.0);
    const SatelliteCamera sc = SatelliteCamera::covering(frame, 16, 16);
    const Image sat = random_image(16, 16, 1);
    const RenderBuffers b = render_panorama(vol, sat, sc, PanoramaCamera{{0, 0, 2}, 8, 32, 0.0}, {16});
    for (double v : b.opacity.values()) EXPECT_EQ(v, 0.0);
    for (double v : b.color.values()) EXPECT_EQ(v, 0.0);
}

TEST(Render, GroundPlaneDepth) {
    const WorldFrame frame;  // 51.2 m footprint, 8 m lid
    const DensityVolume vol(frame, 64, 64, 65);  // only the pinned ground layer
    const SatelliteCamera sc = SatelliteCamera::covering(frame, 64, 64);
    const Image sat = uniform_image(64, 64, {0.5, 0.5, 0.5});
    const PanoramaCamera cam{{0, 0, 2}, 128, 16, 0.3};
    const RenderBuffers b = render_panorama(vol, sat, sc, cam);
    const double dz = vol.cell_u();
    for (std::size_t y = 0; y < cam.height; ++y) {
        const double phi = kPi * (y + 0.5) / cam.height;
        for (std::size_t x = 0; x < cam.width; x += 5) {
            const double depth = b.depth(y, x), op = b.opacity(y, x);
            if (phi <= kPi / 2) {
                EXPECT_LT(op, 1e-12) << "row " << y;
                continue;
            }
            const double exact = 2.0 / std::cos(kPi - phi);
            const Ray r = panorama_pixel_to_ray(cam, frame, x, y);
            if (exact > r.t_far) continue;  // leaves the footprint first
            const double depression = phi - kPi / 2;
            if (depression < 0.35) continue;  // grazing rays smear over many samples
            const double step = r.t_far / kDefaultSamplesPerRay;
            // Density ramps up over the lowest layer, so the surface reads a little high.
            EXPECT_NEAR(depth, exact, 2 * step + dz / std::sin(depression)) << "row " << y;
            EXPECT_GT(op, 0.999);
        }
    }
}

TEST(Render, MoreSamplesBarelyMoveSmoothDepth) {
    const WorldFrame frame;
    DensityVolume vol(frame, 32, 32, 17);
    for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t j = 0; j < 32; ++j)
            for (std::size_t k = 1; k < 17; ++k) vol.set(i, j, k, 0.05 + 0.02 * std::sin(0.3 * i) * std::cos(0.2 * j));
    const SatelliteCamera sc = SatelliteCamera::covering(frame, 32, 32);
    const Image sat = random_image(32, 32, 2);
    const PanoramaCamera cam{{1, 2, 2}, 32, 128, 0.0};
    const RenderBuffers a = render_panorama(vol, sat, sc, cam, {100});
    const RenderBuffers b = render_panorama(vol, sat, sc, cam, {200});
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < a.depth.size(); ++p) {
        const double d = a.depth.values()[p] - b.depth.values()[p];
        num += d * d;
        den += b.depth.values()[p] * b.depth.values()[p];
    }
    EXPECT_LT(std::sqrt(num / den), 0.01);
}

TEST(Render, RaysAgreeWithMarchAndComposite) {
    SmallScene s(6, 6, 5, 3);
    const PanoramaCamera cam{{0.5, -0.7, 1.3}, 8, 16, 1.0};
    const RenderBuffers b = render_panorama(s.volume, s.sat, s.sat_cam, cam, {24});
    const auto rays = panorama_ray_grid(cam, s.frame);
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const RayMarchSamples ms = march_ray(s.volume, rays[r], 24);
        const Composite c = composite(ms);
        const Rgb col = copy_paste_color(ms, c.weights, s.sat, s.sat_cam);
        EXPECT_NEAR(b.depth.values()[r], c.depth, 1e-12);
        EXPECT_NEAR(b.opacity.values()[r], c.opacity, 1e-12);
        EXPECT_NEAR(b.color.values()[3 * r], col.r, 1e-12);
        EXPECT_NEAR(b.color.values()[3 * r + 2], col.b, 1e-12);
        EXPECT_LE(col.r, c.opacity + 1e-12);
    }
}

TEST(Render, WorkerCountDoesNotChangeOutput) {
    SmallScene s(8, 8, 5, 4);
    const PanoramaCamera cam{{0, 0, 1.5}, 16, 64, 0.0};
    RenderOptions one{32, Threads{1}, true}, many{32, Threads{8}, true};
    const RenderBuffers a = render_panorama(s.volume, s.sat, s.sat_cam, cam, one);
    const RenderBuffers b = render_panorama(s.volume, s.sat, s.sat_cam, cam, many);
    EXPECT_EQ(vec(a.depth.values()), vec(b.depth.values()));
    EXPECT_EQ(vec(a.color.values()), vec(b.color.values()));
    EXPECT_EQ(a.weights, b.weights);
    RenderAdjoint adj{Image(16, 64, 1), Image(16, 64, 1), Image()};
    for (double &v : adj.depth.values()) v = 0.3;
    for (double &v : adj.opacity.values()) v = -1.1;
    EXPECT_EQ(render_gradients(s.volume, s.sat, s.sat_cam, cam, adj, one),
              render_gradients(s.volume, s.sat, s.sat_cam, cam, adj, many));
}

TEST(Render, SatelliteFootprintMustMatch) {
    SmallScene s(4, 4, 3, 5);
    const SatelliteCamera wrong{16, 16, 1.0, 1.0};
    EXPECT_THROW(render_panorama(s.volume, s.sat, wrong, PanoramaCamera{{0, 0, 1}, 4, 8, 0.0}), DomainError);
    const Image gray(16, 16, 1);
    EXPECT_THROW(render_panorama(s.volume, gray, s.sat_cam, PanoramaCamera{{0, 0, 1}, 4, 8, 0.0}), DomainError);
}

TEST(Gradient, EmptyVolumeOpacityAdjointIsPositive) {
    const WorldFrame frame{12.8, 12.8, 4.0};
    DensityVolume vol(frame, 8, 8, 5, 0.0, 0.0);
    const SatelliteCamera sc = SatelliteCamera::covering(frame, 8, 8);
    const Image sat = random_image(8, 8, 6);
    Ray r;
    r.origin = {0, 0, 2};
    r.direction = {0, 1, 0};
    std::tie(r.t_near, r.t_far) = clip_to_cube(frame, r.origin, r.direction);
    const std::vector<Ray> rays{r};
    const std::vector<RayAdjoint> adj{RayAdjoint{0.0, 1.0, {}}};
    const auto g = ray_gradients(SceneView{vol, sat, sc}, rays, adj, 32);
    double total = 0.0;
    for (double v : g) {
        EXPECT_GE(v, 0.0);
        total += v;
    }
    EXPECT_GT(total, 0.0);
}

namespace {

// Loss over a handful of rays as a function of the volume, for finite differences.
double ray_loss(const SceneView &scene, std::span<const Ray> rays, std::span<const RayAdjoint> adj, std::size_t S) {
    const auto out = render_rays(scene, rays, S, Threads{1});
    double l = 0.0;
    for (std::size_t r = 0; r < rays.size(); ++r) {
        l += adj[r].depth * out[r].depth + adj[r].opacity * out[r].opacity + adj[r].color.r * out[r].color.r +
             adj[r].color.g * out[r].color.g + adj[r].color.b * out[r].color.b;
    }
    return l;
}

} // namespace

TEST(Gradient, SingleRayThreeSamplesMatchesFiniteDifferences) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 5.0), ua(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const WorldFrame frame{6.0, 6.0, 3.0};
        DensityVolume vol(frame, 3, 3, 3);
        for (std::size_t f = 0; f < vol.node_count(); ++f) {
            const GridIndex g = vol.unflat(f);
            vol.set(g.i, g.j, g.k, u(rng));
        }
        const SatelliteCamera sc = SatelliteCamera::covering(frame, 6, 6);
        const Image sat = random_image(6, 6, trial);
        Ray r;
        r.origin = {ua(rng), ua(rng), 1.0 + 0.5 * ua(rng)};
        r.direction = Vec3{ua(rng), ua(rng), 0.3 * ua(rng)};
        r.direction = (1.0 / norm(r.direction)) * r.direction;
        std::tie(r.t_near, r.t_far) = clip_to_cube(frame, r.origin, r.direction);
        const std::vector<Ray> rays{r};
        const std::vector<RayAdjoint> adj{RayAdjoint{ua(rng), ua(rng), {ua(rng), ua(rng), ua(rng)}}};
        const SceneView scene{vol, sat, sc};
        const auto g = ray_gradients(scene, rays, adj, 3, Threads{1});
        for (std::size_t f = 0; f < vol.node_count(); ++f) {
            if (vol.is_pinned(f)) {
                EXPECT_EQ(g[f], 0.0);
                continue;
            }
            const GridIndex gi = vol.unflat(f);
            const double orig = vol.stored(gi.i, gi.j, gi.k), h = 1e-4;
            vol.set(gi.i, gi.j, gi.k, orig + h);
            const double up = ray_loss(scene, rays, adj, 3);
            vol.set(gi.i, gi.j, gi.k, orig - h);
            const double down = ray_loss(scene, rays, adj, 3);
            vol.set(gi.i, gi.j, gi.k, orig);
            const double fd = (up - down) / (2 * h);
            EXPECT_LE(std::abs(fd - g[f]), 1e-5 * std::max(1.0, std::abs(fd))) << "node " << f;
        }
    }
}

TEST(Gradient, FullPanoramaL2LossMatchesFiniteDifferences) {
    SmallScene s(16, 16, 9, 41);
    const PanoramaCamera cam{{0.3, -0.4, 1.7}, 16, 64, 0.2};
    RenderOptions opt{32, Threads{1}, false};
    Image target_depth(16, 64, 1);
    for (double &v : target_depth.values()) v = 1.0;
    const LossWeights w{0.0, 1.0, 0.0, 0.0};
    const ReconTargets tgt{target_depth, std::nullopt, std::nullopt};
    auto loss = [&]() { return recon_loss(render_panorama(s.volume, s.sat, s.sat_cam, cam, opt), tgt, w).value; };
    const ReconLoss rl = recon_loss(render_panorama(s.volume, s.sat, s.sat_cam, cam, opt), tgt, w);
    const auto g = render_gradients(s.volume, s.sat, s.sat_cam, cam, rl.adjoint, opt);
    std::mt19937_64 rng(42);
    std::size_t checked = 0;
    while (checked < 40) {
        const std::size_t f = rng() % s.volume.node_count();
        if (s.volume.is_pinned(f) || g[f] == 0.0) continue;
        const GridIndex gi = s.volume.unflat(f);
        const double orig = s.volume.stored(gi.i, gi.j, gi.k), h = 1e-4;
        s.volume.set(gi.i, gi.j, gi.k, orig + h);
        const double up = loss();
        s.volume.set(gi.i, gi.j, gi.k, orig - h);
        const double down = loss();
        s.volume.set(gi.i, gi.j, gi.k, orig);
        const double fd = (up - down) / (2 * h);
        EXPECT_LE(std::abs(fd - g[f]), 1e-3 * std::max(std::abs(fd), 1e-6)) << "node " << f;
        ++checked;
    }
}

TEST(Gradient, ColorAdjointNeedsColorPass) {
    SmallScene s(4, 4, 3, 7);
    const auto rays = panorama_ray_grid(PanoramaCamera{{0, 0, 1}, 2, 4, 0.0}, s.frame);
    auto adj = [](std::size_t, const RayRender &) { return RayAdjoint{0.0, 0.0, {1.0, 0.0, 0.0}}; };
    EXPECT_THROW(render_and_backprop(SceneView{s.volume, s.sat, s.sat_cam}, std::span<const Ray>(rays), 8, Threads{1},
                                     adj, false),
                 DomainError);
}

TEST(Trajectory, SinglePoseMatchesRender) {
    SmallScene s(8, 8, 5, 8);
    const PanoramaCamera cam{{0, 1, 2}, 8, 32, 0.5};
    const std::vector<PanoramaCamera> path{cam};
    const auto frames = render_trajectory(s.volume, s.sat, s.sat_cam, path, {16});
    const RenderBuffers one = render_panorama(s.volume, s.sat, s.sat_cam, cam, {16});
    ASSERT_EQ(frames.size(), 1u);
    EXPECT_EQ(vec(frames[0].depth.values()), vec(one.depth.values()));
    EXPECT_EQ(vec(frames[0].color.values()), vec(one.color.values()));
    EXPECT_THROW(render_trajectory(s.volume, s.sat, s.sat_cam, std::span<const PanoramaCamera>{}, {16}), DomainError);
}

namespace {

// Expected raw depth of a vertical ray from height h through the blended
// ground ramp sigma(u) = rho * max(0, 1 - u / dz), by fine quadrature.
double ramp_depth_oracle(double h, double dz, double rho) {
    const std::size_t n = 2000000;
    const double ds = h / n;
    double log_t = 0.0, depth = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (i + 0.5) * ds;
        const double sigma = rho * std::max(0.0, 1.0 - (h - t) / dz);
        const double tau = sigma * ds;
        depth += std::exp(log_t) * -std::expm1(-tau) * t;
        log_t -= tau;
    }
    return depth;
}

std::vector<RenderBuffers> two_frames_north(const WorldFrame &frame, std::size_t nz) {
    const DensityVolume vol(frame, 16, 16, nz);
    const SatelliteCamera sc = SatelliteCamera::covering(frame, 16, 16);
    const Image sat = uniform_image(16, 16, {0.4, 0.4, 0.4});
    // 4096 rows put the bottom row within 0.05 degrees of straight down.
    const std::vector<PanoramaCamera> path{{{0, 0, 2}, 4096, 4, 0.0}, {{0, 1, 2}, 4096, 4, 0.0}};
    return render_trajectory(vol, sat, sc, path);
}

} // namespace

TEST(Trajectory, GroundPlaneStraightDownDepth) {
    // Vertical spacing equal to the 2 cm marching step: the ground ramp is thin
    // enough that the depth is 2 m, yet thick enough to be sampled.
    const auto fine = two_frames_north(WorldFrame{51.2, 51.2, 2.5}, 126);
    for (const RenderBuffers &f : fine) {
        EXPECT_NEAR(f.depth(4095, 0), 2.0, 0.02);
    }
    EXPECT_EQ(fine[0].depth(4095, 0), fine[1].depth(4095, 0));
    // Default vertical grid: the blended ground layer lifts the surface.
    const WorldFrame frame;
    const auto coarse = two_frames_north(frame, 65);
    const double oracle = ramp_depth_oracle(2.0, frame.max_height / 64, 1e3);
    EXPECT_NEAR(oracle, 1.89, 0.01);
    for (const RenderBuffers &f : coarse) {
        EXPECT_NEAR(f.depth(4095, 0), oracle, 2 * 2.0 / kDefaultSamplesPerRay);
    }
}

TEST(Trajectory, ClosedLoopRepeatsFirstFrame) {
    SmallScene s(8, 8, 5, 9);
    const std::vector<PanoramaCamera> path{
        {{0, 0, 2}, 8, 32, 0.0}, {{1, 0, 2}, 8, 32, 0.0}, {{1, 1, 2}, 8, 32, 0.0}, {{0, 0, 2}, 8, 32, 0.0}};
    const auto frames = render_trajectory(s.volume, s.sat, s.sat_cam, path, {16});
    EXPECT_EQ(vec(frames.front().depth.values()), vec(frames.back().depth.values()));
    EXPECT_EQ(vec(frames.front().color.values()), vec(frames.back().color.values()));
}
