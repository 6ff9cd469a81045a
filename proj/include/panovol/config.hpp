// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// JSON documents (scene specs, run configs, metric reports) and CSV files
// (camera paths, loss traces). Parsing is strict: unknown keys are errors.

#include "panovol/camera.hpp"
#include "panovol/core.hpp"
#include "panovol/optimize.hpp"
#include "panovol/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

namespace panovol::io {

using json = nlohmann::json;

namespace detail {

inline void allow_keys(const json &obj, std::initializer_list<const char *> keys, const std::string &where) {
    if (!obj.is_object()) {
        throw FormatError(where + ": expected a JSON object");
    }
    for (const auto &item : obj.items()) {
        bool known = false;
        for (const char *k : keys) {
            known |= item.key() == k;
        }
        if (!known) {
            throw FormatError(where + ": unknown key \"" + item.key() + "\"");
        }
    }
}

template <typename T>
T get(const json &obj, const char *key, const std::string &where) {
    if (!obj.contains(key)) {
        throw FormatError(where + ": missing key \"" + std::string(key) + "\"");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception &) {
        throw FormatError(where + "." + key + ": wrong type");
    }
}

template <typename T>
T get_or(const json &obj, const char *key, T fallback, const std::string &where) {
    return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

inline Rgb rgb(const json &j, const std::string &where) {
    if (!j.is_array() || j.size() != 3) {
        throw FormatError(where + ": expected [r, g, b]");
    }
    try {
        return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    } catch (const json::exception &) {
        throw FormatError(where + ": color components must be numbers");
    }
}

inline std::pair<double, double> pair(const json &j, const std::string &where) {
    if (!j.is_array() || j.size() != 2) {
        throw FormatError(where + ": expected a two-element array");
    }
    try {
        return {j[0].get<double>(), j[1].get<double>()};
    } catch (const json::exception &) {
        throw FormatError(where + ": expected numbers");
    }
}

inline json read_json(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path.string() + ": cannot open for reading");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace detail

/// Scene document:
///   {"name", "footprint": {"extent_e", "extent_n", "max_height"},
///    "ground": {"type": "solid", "color"} | {"type": "checker", "size_m", "c1", "c2"},
///    "primitives": [{"type": "box", "center", "size", "height", "albedo"} |
///                   {"type": "cylinder", "center", "radius", "height", "albedo"}],
///    "scatter": [{"shape", "count", "size", "height", "region", "clear_radius", "keep_clear", "albedo"}],
///    "sky_color", "seed"}
inline SceneSpec parse_scene(const json &j, const std::string &where = "scene") {
    using detail::allow_keys;
    using detail::get;
    allow_keys(j, {"name", "footprint", "ground", "primitives", "scatter", "sky_color", "seed"}, where);
    SceneSpec s;
    s.name = detail::get_or<std::string>(j, "name", where, where);
    if (j.contains("footprint")) {
        const json &f = j.at("footprint");
        const std::string w = where + ".footprint";
        allow_keys(f, {"extent_e", "extent_n", "max_height"}, w);
        s.frame.extent_e = detail::get_or(f, "extent_e", s.frame.extent_e, w);
        s.frame.extent_n = detail::get_or(f, "extent_n", s.frame.extent_n, w);
        s.frame.max_height = detail::get_or(f, "max_height", s.frame.max_height, w);
    }
    if (j.contains("ground")) {
        const json &g = j.at("ground");
        const std::string w = where + ".ground";
        const auto type = get<std::string>(g, "type", w);
        if (type == "solid") {
            allow_keys(g, {"type", "color"}, w);
            s.ground = SolidGround{detail::rgb(g.at("color"), w + ".color")};
        } else if (type == "checker") {
            allow_keys(g, {"type", "size_m", "c1", "c2"}, w);
            s.ground = CheckerGround{get<double>(g, "size_m", w), detail::rgb(g.at("c1"), w + ".c1"),
                                     detail::rgb(g.at("c2"), w + ".c2")};
        } else {
            throw FormatError(w + ".type: unknown ground type \"" + type + "\"");
        }
    }
    if (j.contains("primitives")) {
        const json &arr = j.at("primitives");
        if (!arr.is_array()) {
            throw FormatError(where + ".primitives: expected an array");
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const json &p = arr[i];
            const std::string w = where + ".primitives[" + std::to_string(i) + "]";
            const auto type = get<std::string>(p, "type", w);
            if (type == "box") {
                allow_keys(p, {"type", "center", "size", "height", "albedo"}, w);
                const auto [ce, cn] = detail::pair(p.at("center"), w + ".center");
                const auto [se, sn] = detail::pair(p.at("size"), w + ".size");
                s.primitives.emplace_back(
                    BoxPrimitive{ce, cn, se, sn, get<double>(p, "height", w), detail::rgb(p.at("albedo"), w + ".albedo")});
            } else if (type == "cylinder") {
                allow_keys(p, {"type", "center", "radius", "height", "albedo"}, w);
                const auto [ce, cn] = detail::pair(p.at("center"), w + ".center");
                s.primitives.emplace_back(CylinderPrimitive{ce, cn, get<double>(p, "radius", w),
                                                            get<double>(p, "height", w),
                                                            detail::rgb(p.at("albedo"), w + ".albedo")});
            } else {
                throw FormatError(w + ".type: unknown primitive type \"" + type + "\"");
            }
        }
    }
    if (j.contains("scatter")) {
        const json &arr = j.at("scatter");
        if (!arr.is_array()) {
            throw FormatError(where + ".scatter: expected an array");
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const json &p = arr[i];
            const std::string w = where + ".scatter[" + std::to_string(i) + "]";
            allow_keys(p, {"shape", "count", "size", "height", "region", "clear_radius", "keep_clear", "albedo"}, w);
            Scatter sc;
            const auto shape = get<std::string>(p, "shape", w);
            if (shape != "cylinder" && shape != "box") {
                throw FormatError(w + ".shape: expected \"cylinder\" or \"box\"");
            }
            sc.cylinders = shape == "cylinder";
            sc.count = get<std::size_t>(p, "count", w);
            std::tie(sc.size_min, sc.size_max) = detail::pair(p.at("size"), w + ".size");
            std::tie(sc.height_min, sc.height_max) = detail::pair(p.at("height"), w + ".height");
            const auto region = get<std::vector<double>>(p, "region", w);
            if (region.size() != 4) {
                throw FormatError(w + ".region: expected [e_min, e_max, n_min, n_max]");
            }
            sc.region_e_min = region[0];
            sc.region_e_max = region[1];
            sc.region_n_min = region[2];
            sc.region_n_max = region[3];
            sc.clear_radius = detail::get_or(p, "clear_radius", 0.0, w);
            if (p.contains("keep_clear")) {
                for (const json &k : p.at("keep_clear")) {
                    sc.keep_clear.push_back(detail::pair(k, w + ".keep_clear"));
                }
            }
            sc.albedo = detail::rgb(p.at("albedo"), w + ".albedo");
            s.scatters.push_back(sc);
        }
    }
    if (j.contains("sky_color")) {
        s.sky_color = detail::rgb(j.at("sky_color"), where + ".sky_color");
    }
    s.seed = detail::get_or<std::uint64_t>(j, "seed", 0, where);
    return s;
}

inline SceneSpec read_scene(const std::filesystem::path &path) {
    return parse_scene(detail::read_json(path), path.string());
}

/// Camera pose: position plus heading in radians.
struct Pose {
    double e = 0.0, n = 0.0, u = 2.0, heading = 0.0;

    PanoramaCamera camera(std::size_t height, std::size_t width) const {
        return {{e, n, u}, height, width, wrap_heading(heading)};
    }
};

/// Everything `fit` needs, read from one JSON document.
struct RunConfig {
    std::filesystem::path scene_path;
    std::size_t sat_height = 256, sat_width = 256;
    std::size_t pano_height = 128, pano_width = 512;
    std::vector<Pose> train_poses;
    std::vector<Pose> heldout_poses;
    bool target_depth = true, target_opacity = false, target_color = true;
    FitConfig fit;
    std::filesystem::path output;
};

inline Pose parse_pose(const json &j, const std::string &where) {
    if (!j.is_array() || (j.size() != 3 && j.size() != 4)) {
        throw FormatError(where + ": expected [e, n, u] or [e, n, u, heading]");
    }
    try {
        return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j.size() == 4 ? j[3].get<double>() : 0.0};
    } catch (const json::exception &) {
        throw FormatError(where + ": pose components must be numbers");
    }
}

inline RunConfig parse_run_config(const json &j, const std::filesystem::path &base, const std::string &where = "config") {
    using detail::allow_keys;
    using detail::get_or;
    allow_keys(j, {"scene", "satellite", "volume", "panorama", "train_poses", "heldout_poses", "targets", "fit",
                   "weights", "seed", "threads", "output"},
               where);
    RunConfig rc;
    const auto scene = detail::get<std::string>(j, "scene", where);
    rc.scene_path = std::filesystem::path(scene).is_absolute() ? std::filesystem::path(scene) : base / scene;
    if (!std::filesystem::exists(rc.scene_path)) {
        throw FormatError(where + ".scene: file not found: " + rc.scene_path.string());
    }
    if (j.contains("satellite")) {
        const json &s = j.at("satellite");
        allow_keys(s, {"height", "width"}, where + ".satellite");
        rc.sat_height = get_or(s, "height", rc.sat_height, where + ".satellite");
        rc.sat_width = get_or(s, "width", rc.sat_width, where + ".satellite");
    }
    if (j.contains("volume")) {
        const json &v = j.at("volume");
        const std::string w = where + ".volume";
        allow_keys(v, {"nx", "ny", "nz", "ground_density"}, w);
        rc.fit.nx = get_or(v, "nx", rc.fit.nx, w);
        rc.fit.ny = get_or(v, "ny", rc.fit.ny, w);
        rc.fit.nz = get_or(v, "nz", rc.fit.nz, w);
        rc.fit.ground_density = get_or(v, "ground_density", rc.fit.ground_density, w);
    }
    if (j.contains("panorama")) {
        const json &p = j.at("panorama");
        allow_keys(p, {"height", "width"}, where + ".panorama");
        rc.pano_height = get_or(p, "height", rc.pano_height, where + ".panorama");
        rc.pano_width = get_or(p, "width", rc.pano_width, where + ".panorama");
    }
    auto poses = [&](const char *key, std::vector<Pose> &out) {
        if (!j.contains(key)) {
            return;
        }
        const json &arr = j.at(key);
        if (!arr.is_array()) {
            throw FormatError(where + "." + key + ": expected an array of poses");
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            out.push_back(parse_pose(arr[i], where + "." + key + "[" + std::to_string(i) + "]"));
        }
    };
    poses("train_poses", rc.train_poses);
    poses("heldout_poses", rc.heldout_poses);
    if (rc.train_poses.empty()) {
        throw FormatError(where + ".train_poses: at least one training pose is required");
    }
    if (j.contains("targets")) {
        const auto targets = detail::get<std::vector<std::string>>(j, "targets", where);
        rc.target_depth = rc.target_opacity = rc.target_color = false;
        for (const auto &t : targets) {
            if (t == "depth") rc.target_depth = true;
            else if (t == "opacity") rc.target_opacity = true;
            else if (t == "color") rc.target_color = true;
            else throw FormatError(where + ".targets: unknown target \"" + t + "\"");
        }
    }
    if (j.contains("fit")) {
        const json &f = j.at("fit");
        const std::string w = where + ".fit";
        allow_keys(f, {"steps", "step_size", "beta1", "beta2", "epsilon", "samples_per_ray", "rays_per_step",
                       "init_density", "max_height", "recon_ground_only"},
                   w);
        FitConfig &c = rc.fit;
        c.steps = get_or(f, "steps", c.steps, w);
        c.step_size = get_or(f, "step_size", c.step_size, w);
        c.beta1 = get_or(f, "beta1", c.beta1, w);
        c.beta2 = get_or(f, "beta2", c.beta2, w);
        c.epsilon = get_or(f, "epsilon", c.epsilon, w);
        c.samples_per_ray = get_or(f, "samples_per_ray", c.samples_per_ray, w);
        c.rays_per_step = get_or(f, "rays_per_step", c.rays_per_step, w);
        c.init_density = get_or(f, "init_density", c.init_density, w);
        c.max_height = get_or(f, "max_height", c.max_height, w);
        c.recon_ground_only = get_or(f, "recon_ground_only", c.recon_ground_only, w);
    }
    if (j.contains("weights")) {
        const json &wj = j.at("weights");
        const std::string w = where + ".weights";
        allow_keys(wj, {"l1", "l2", "snop", "smooth"}, w);
        LossWeights &lw = rc.fit.weights;
        lw.l1 = get_or(wj, "l1", lw.l1, w);
        lw.l2 = get_or(wj, "l2", lw.l2, w);
        lw.snop = get_or(wj, "snop", lw.snop, w);
        lw.smooth = get_or(wj, "smooth", lw.smooth, w);
    }
    rc.fit.seed = get_or<std::uint64_t>(j, "seed", rc.fit.seed, where);
    rc.fit.threads.count = get_or<std::size_t>(j, "threads", rc.fit.threads.count, where);
    if (j.contains("output")) {
        rc.output = base / detail::get<std::string>(j, "output", where);
    }
    try {
        rc.fit.validate();
    } catch (const DomainError &e) {
        throw FormatError(where + ": " + e.what());
    }
    return rc;
}

inline RunConfig read_run_config(const std::filesystem::path &path) {
    return parse_run_config(detail::read_json(path), path.parent_path(), path.string());
}

// ---- CSV -----------------------------------------------------------------

/// Camera path CSV: header "frame,e,n,u,heading_rad", one pose per row.
inline std::vector<Pose> parse_pose_csv(std::istream &in, const std::string &where = "path") {
    std::vector<Pose> poses;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (lineno == 1 && line.rfind("frame", 0) == 0) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                vals.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos) {
                    throw std::invalid_argument(cell);
                }
            } catch (const std::exception &) {
                throw FormatError(where + ":" + std::to_string(lineno) + ": bad number \"" + cell + "\"");
            }
        }
        if (vals.size() != 5) {
            throw FormatError(where + ":" + std::to_string(lineno) + ": expected 5 columns frame,e,n,u,heading_rad");
        }
        poses.push_back({vals[1], vals[2], vals[3], vals[4]});
    }
    return poses;
}

inline std::vector<Pose> read_pose_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path.string() + ": cannot open for reading");
    }
    return parse_pose_csv(in, path.string());
}

inline void write_pose_csv(const std::filesystem::path &path, const std::vector<Pose> &poses) {
    std::ofstream out(path);
    out.precision(17);
    out << "frame,e,n,u,heading_rad\n";
    for (std::size_t i = 0; i < poses.size(); ++i) {
        out << i << ',' << poses[i].e << ',' << poses[i].n << ',' << poses[i].u << ',' << poses[i].heading << '\n';
    }
}

inline void write_loss_csv(const std::filesystem::path &path, const std::vector<LossRecord> &trace) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError(path.string() + ": cannot open for writing");
    }
    out.precision(10);
    out << "step,total,snop,depth,opacity,color,smooth\n";
    for (const LossRecord &r : trace) {
        out << r.step << ',' << r.total << ',' << r.snop << ',' << r.depth << ',' << r.opacity << ',' << r.color << ','
            << r.smooth << '\n';
    }
}

// ---- reports ---------------------------------------------------------------

inline json to_json(const MetricReport &m) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    auto arr = [&](const std::vector<double> &v) {
        json a = json::array();
        for (double x : v) a.push_back(num(x));
        return a;
    };
    return {{"rmse", num(m.rmse)},
            {"psnr", num(m.psnr)},
            {"ssim", num(m.ssim)},
            {"sd", num(m.sd)},
            {"channels",
             {{"rmse", arr(m.channel_rmse)},
              {"psnr", arr(m.channel_psnr)},
              {"ssim", arr(m.channel_ssim)},
              {"sd", arr(m.channel_sd)}}}};
}

inline json to_json(const FitReport &r) {
    json views = json::array();
    for (const ViewReport &v : r.views) {
        json ch = json::object();
        for (const ChannelReport &c : v.channels) {
            ch[c.channel] = to_json(c.metrics);
        }
        views.push_back({{"channels", ch},
                         {"mean_sky_opacity", v.mean_sky_opacity},
                         {"mean_ground_opacity", v.mean_ground_opacity},
                         {"ground_depth_rmse", v.ground_depth_rmse}});
    }
    json mean = json::object();
    for (const ChannelReport &c : r.mean) {
        mean[c.channel] = {{"rmse", c.metrics.rmse}, {"psnr", c.metrics.psnr}, {"ssim", c.metrics.ssim}, {"sd", c.metrics.sd}};
    }
    return {{"views", views},
            {"mean", mean},
            {"mean_sky_opacity", r.mean_sky_opacity},
            {"mean_ground_opacity", r.mean_ground_opacity}};
}

inline void write_json(const std::filesystem::path &path, const json &j) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw FormatError(path.string() + ": cannot open for writing");
    }
    out << j.dump(2) << '\n';
}

} // namespace panovol::io
