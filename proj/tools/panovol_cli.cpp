// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: synth, fit, render, trajectory, eval.

#include "panovol/panovol.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace panovol;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    std::size_t samples = kDefaultSamplesPerRay;
};

std::vector<double> parse_numbers(const std::string &text, std::size_t expected, const char *what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
            if (used != cell.size()) {
                throw std::invalid_argument(cell);
            }
        } catch (const std::exception &) {
            throw FormatError(std::string(what) + ": bad number \"" + cell + "\"");
        }
    }
    if (out.size() != expected) {
        throw FormatError(std::string(what) + ": expected " + std::to_string(expected) + " comma-separated values");
    }
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string &text, std::size_t expected, const char *what) {
    std::vector<std::size_t> out;
    for (double v : parse_numbers(text, expected, what)) {
        if (!(v >= 1.0) || v != std::floor(v)) {
            throw FormatError(std::string(what) + ": sizes must be positive integers");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

// Depth visualization: 0 m black, footprint diagonal white.
Image depth_preview(const Image &depth, const WorldFrame &frame) { return scaled(depth, 1.0 / frame.footprint_diagonal()); }

void write_buffers(const fs::path &dir, const RenderBuffers &buf, const WorldFrame &frame) {
    io::write_map(dir / "depth.s2dm", buf.depth);
    io::write_map(dir / "opacity.s2dm", buf.opacity);
    io::write_map(dir / "color.s2dm", buf.color);
    io::write_png(dir / "color.png", buf.color);
    io::write_png(dir / "depth.png", depth_preview(buf.depth, frame));
    io::write_png(dir / "opacity.png", buf.opacity);
}

std::string view_dir(std::size_t v) {
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03zu", v);
    return name;
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
    fs::path scene, out, poses;
    std::string resolution = "256,256,65";
    std::string pano_size = "128,512";
    std::size_t sat_size = 256;
};

void run_synth(const SynthArgs &a, const Common &c) {
    SceneSpec spec = io::read_scene(a.scene);
    if (c.seed) {
        spec.seed = *c.seed;
    }
    const auto res = parse_sizes(a.resolution, 3, "--resolution");
    const auto pano = parse_sizes(a.pano_size, 2, "--pano-size");
    std::vector<io::Pose> poses{io::Pose{}};
    if (!a.poses.empty()) {
        poses = io::read_pose_csv(a.poses);
    }
    const SatelliteCamera sat_cam = SatelliteCamera::covering(spec.frame, a.sat_size, a.sat_size);
    const Image sat = render_satellite(spec, sat_cam);
    const BakedScene baked = bake_scene(spec, res[0], res[1], res[2]);
    io::write_png(a.out / "satellite.png", sat);
    io::write_volume(a.out / "gt.s2dv", baked.volume);
    RenderOptions opt;
    opt.samples = c.samples;
    opt.threads.count = c.threads;
    for (std::size_t v = 0; v < poses.size(); ++v) {
        const PanoramaCamera cam = poses[v].camera(pano[0], pano[1]);
        const OracleMaps oracle = oracle_ground_truth(spec, cam);
        const RenderBuffers copy = render_panorama(baked.volume, sat, sat_cam, cam, opt);
        const fs::path dir = a.out / view_dir(v);
        io::write_map(dir / "depth.s2dm", oracle.depth);
        io::write_map(dir / "opacity.s2dm", oracle.opacity);
        io::write_map(dir / "color.s2dm", copy.color);
        io::write_map(dir / "albedo.s2dm", oracle.color);
        io::write_map(dir / "sky_mask.s2dm", oracle.sky_mask.to_image());
        io::write_png(dir / "color.png", copy.color);
        io::write_png(dir / "albedo.png", oracle.color);
        io::write_png(dir / "sky_mask.png", oracle.sky_mask.to_image());
        io::write_png(dir / "depth.png", depth_preview(oracle.depth, spec.frame));
        if (oracle.sky_mask.sky_count() > 0) {
            io::write_histogram(dir / "sky_histogram.s2dh", sky_histogram(oracle.color, oracle.sky_mask));
        }
    }
    io::write_pose_csv(a.out / "poses.csv", poses);
    std::cout << "synth: " << spec.name << ", " << poses.size() << " view(s) -> " << a.out.string() << '\n';
}

// ---- fit -----------------------------------------------------------------------

struct FitArgs {
    fs::path config, out;
};

void run_fit(const FitArgs &a, Common c) {
    io::RunConfig rc = io::read_run_config(a.config);
    if (c.seed) {
        rc.fit.seed = *c.seed;
    }
    if (c.threads) {
        rc.fit.threads.count = c.threads;
    }
    const fs::path out = a.out.empty() ? rc.output : a.out;
    if (out.empty()) {
        throw FormatError(a.config.string() + ": no output directory (use --out or \"output\")");
    }
    const SyntheticRun run = prepare_run(rc);
    const FitResult fit = fit_density(run.satellite, run.sat_cam, run.train, rc.fit);
    io::write_volume(out / "volume.s2dv", fit.volume);
    io::write_loss_csv(out / "loss.csv", fit.trace);
    io::write_png(out / "satellite.png", run.satellite);
    RenderOptions opt;
    opt.samples = rc.fit.samples_per_ray;
    opt.threads = rc.fit.threads;
    if (!run.heldout.empty()) {
        const FitReport report = evaluate_fit(fit.volume, run.satellite, run.sat_cam, run.heldout, opt);
        for (std::size_t v = 0; v < report.views.size(); ++v) {
            const fs::path dir = out / "heldout" / view_dir(v);
            write_buffers(dir, report.views[v].buffers, fit.volume.frame());
            const Observation &o = run.heldout[v];
            if (o.targets.depth) io::write_map(dir / "target_depth.s2dm", *o.targets.depth);
            if (o.targets.opacity) io::write_map(dir / "target_opacity.s2dm", *o.targets.opacity);
            if (o.targets.color) io::write_map(dir / "target_color.s2dm", *o.targets.color);
            if (o.sky_mask) io::write_map(dir / "sky_mask.s2dm", o.sky_mask->to_image());
        }
        io::write_json(out / "report.json", io::to_json(report));
    }
    for (std::size_t v = 0; v < run.train.size(); ++v) {
        write_buffers(out / "train" / view_dir(v),
                      render_panorama(fit.volume, run.satellite, run.sat_cam, run.train[v].pano_cam, opt),
                      fit.volume.frame());
    }
    const LossRecord &last = fit.trace.empty() ? LossRecord{} : fit.trace.back();
    std::cout << "fit: " << fit.trace.size() << " steps, final loss " << last.total << " -> " << out.string() << '\n';
}

// ---- render / trajectory ----------------------------------------------------

struct RenderArgs {
    fs::path volume, sat, out, path;
    std::string pose;
    std::string pano_size = "128,512";
};

struct LoadedScene {
    DensityVolume volume;
    Image satellite;
    SatelliteCamera sat_cam;
};

LoadedScene load_scene(const RenderArgs &a) {
    LoadedScene s{io::read_volume(a.volume), io::read_png(a.sat), {}};
    s.sat_cam = SatelliteCamera::covering(s.volume.frame(), s.satellite.height(), s.satellite.width());
    return s;
}

RenderOptions render_options(const Common &c) {
    RenderOptions opt;
    opt.samples = c.samples;
    opt.threads.count = c.threads;
    return opt;
}

void run_render(const RenderArgs &a, const Common &c) {
    const LoadedScene s = load_scene(a);
    const auto pano = parse_sizes(a.pano_size, 2, "--pano-size");
    const auto p = parse_numbers(a.pose, 4, "--pose");
    const PanoramaCamera cam = io::Pose{p[0], p[1], p[2], p[3]}.camera(pano[0], pano[1]);
    const RenderBuffers buf = render_panorama(s.volume, s.satellite, s.sat_cam, cam, render_options(c));
    write_buffers(a.out, buf, s.volume.frame());
    std::cout << "render: " << pano[0] << "x" << pano[1] << " -> " << a.out.string() << '\n';
}

void run_trajectory(const RenderArgs &a, const Common &c) {
    const LoadedScene s = load_scene(a);
    const auto pano = parse_sizes(a.pano_size, 2, "--pano-size");
    const std::vector<io::Pose> poses = io::read_pose_csv(a.path);
    if (poses.empty()) {
        throw DomainError(a.path.string() + ": camera path has no poses");
    }
    std::vector<PanoramaCamera> cams;
    for (const io::Pose &p : poses) {
        cams.push_back(p.camera(pano[0], pano[1]));
    }
    const RenderOptions opt = render_options(c);
    for (std::size_t f = 0; f < cams.size(); ++f) {
        // One frame at a time keeps memory flat on long paths.
        const RenderBuffers buf = render_panorama(s.volume, s.satellite, s.sat_cam, cams[f], opt);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "%04zu", f);
        io::write_png(a.out / ("frame_" + std::string(stem) + ".png"), buf.color);
        io::write_map(a.out / ("depth_" + std::string(stem) + ".s2dm"), buf.depth);
        io::write_map(a.out / ("opacity_" + std::string(stem) + ".s2dm"), buf.opacity);
    }
    std::cout << "trajectory: " << cams.size() << " frame(s) -> " << a.out.string() << '\n';
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
    fs::path pred, truth, report;
    double depth_range = WorldFrame{}.footprint_diagonal();
};

void run_eval(const EvalArgs &a, const Common &) {
    if (!fs::is_directory(a.truth)) {
        throw FormatError(a.truth.string() + ": not a directory");
    }
    if (!(a.depth_range > 0.0)) {
        throw DomainError("--depth-range must be positive");
    }
    std::map<std::string, MetricReport> results;
    for (const auto &entry : fs::recursive_directory_iterator(a.truth)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".s2dm") {
            continue;
        }
        const fs::path rel = fs::relative(entry.path(), a.truth);
        const fs::path pred_path = a.pred / rel;
        if (!fs::exists(pred_path)) {
            continue;
        }
        const Image truth = io::read_map(entry.path());
        const Image pred = io::read_map(pred_path);
        if (!truth.same_shape(pred)) {
            throw DomainError(pred_path.string() + ": shape " + shape_string(pred) + " does not match " +
                              shape_string(truth));
        }
        const bool depth = entry.path().stem().string().find("depth") != std::string::npos;
        const double s = depth ? 255.0 / a.depth_range : 255.0;
        MetricReport r = compare_images(scaled(pred, s), scaled(truth, s));
        results[rel.generic_string()] = r;
    }
    if (results.empty()) {
        throw DomainError("eval: no matching .s2dm files between " + a.pred.string() + " and " + a.truth.string());
    }
    io::json files = io::json::object();
    double rmse = 0.0, psnr = 0.0, sd = 0.0, ssim_sum = 0.0;
    std::size_t ssim_n = 0;
    for (const auto &[name, r] : results) {
        files[name] = io::to_json(r);
        rmse += r.rmse;
        psnr += r.psnr;
        sd += r.sd;
        if (std::isfinite(r.ssim)) {
            ssim_sum += r.ssim;
            ++ssim_n;
        }
    }
    const double n = static_cast<double>(results.size());
    io::json mean = {{"rmse", rmse / n}, {"psnr", psnr / n}, {"sd", sd / n}};
    mean["ssim"] = ssim_n ? io::json(ssim_sum / static_cast<double>(ssim_n)) : io::json(nullptr);
    io::write_json(a.report, {{"files", files}, {"mean", mean}, {"scale", "0..255; depth over --depth-range meters"}});
    std::cout << "eval: " << results.size() << " file(s) -> " << a.report.string() << '\n';
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"panovol: satellite-to-panorama density volumes"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App *sub, bool samples) {
        sub->add_option("--seed", common.seed, "Random seed (overrides the config / scene seed)");
        sub->add_option("--threads", common.threads, "Worker threads (0 = all hardware threads)");
        if (samples) {
            sub->add_option("--samples", common.samples, "Samples per ray")->check(CLI::PositiveNumber);
        }
    };

    SynthArgs synth;
    auto *s = app.add_subcommand("synth", "Bake a scene and write ground-truth buffers");
    s->add_option("--scene", synth.scene, "Scene JSON")->required();
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--resolution", synth.resolution, "Volume nodes nx,ny,nz");
    s->add_option("--pano-size", synth.pano_size, "Panorama height,width");
    s->add_option("--sat-size", synth.sat_size, "Satellite image side in pixels")->check(CLI::PositiveNumber);
    s->add_option("--poses", synth.poses, "Pose CSV (frame,e,n,u,heading_rad); default one pose at the origin");
    add_common(s, true);

    FitArgs fit;
    auto *f = app.add_subcommand("fit", "Fit a density volume from a run configuration");
    f->add_option("--config", fit.config, "Run configuration JSON")->required();
    f->add_option("--out", fit.out, "Output directory (overrides \"output\")");
    add_common(f, false);

    RenderArgs render;
    auto *r = app.add_subcommand("render", "Render one panorama from a volume");
    r->add_option("--volume", render.volume, "S2DV volume")->required();
    r->add_option("--sat", render.sat, "Satellite PNG")->required();
    r->add_option("--pose", render.pose, "e,n,u,heading_rad")->required();
    r->add_option("--out", render.out, "Output directory")->required();
    r->add_option("--pano-size", render.pano_size, "Panorama height,width");
    add_common(r, true);

    RenderArgs traj;
    auto *t = app.add_subcommand("trajectory", "Render numbered frames along a camera path");
    t->add_option("--volume", traj.volume, "S2DV volume")->required();
    t->add_option("--sat", traj.sat, "Satellite PNG")->required();
    t->add_option("--path", traj.path, "Pose CSV (frame,e,n,u,heading_rad)")->required();
    t->add_option("--out", traj.out, "Output directory")->required();
    t->add_option("--pano-size", traj.pano_size, "Panorama height,width");
    add_common(t, true);

    EvalArgs eval;
    auto *e = app.add_subcommand("eval", "Compare predicted and reference buffers");
    e->add_option("--pred", eval.pred, "Predicted buffers directory")->required();
    e->add_option("--truth", eval.truth, "Reference buffers directory")->required();
    e->add_option("--report", eval.report, "Report JSON path")->required();
    e->add_option("--depth-range", eval.depth_range, "Meters mapped to 255 for depth files");
    add_common(e, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*s) run_synth(synth, common);
        if (*f) run_fit(fit, common);
        if (*r) run_render(render, common);
        if (*t) run_trajectory(traj, common);
        if (*e) run_eval(eval, common);
    } catch (const FormatError &err) {
        std::cerr << "format error: " << err.what() << '\n';
        return 2;
    } catch (const DomainError &err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error &err) {
        std::cerr << "format error: " << err.what() << '\n';
        return 2;
    }
    return 0;
}
