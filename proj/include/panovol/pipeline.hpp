// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panovol/config.hpp"
#include "panovol/optimize.hpp"
#include "panovol/render.hpp"
#include "panovol/synth.hpp"

#include <vector>

namespace panovol {

struct TargetSet {
    bool depth = true;
    bool opacity = false;
    bool color = true;
};

/// Supervision for one synthetic view: oracle depth and opacity, the
/// copy-paste render of the ground-truth volume as color, oracle sky mask.
inline Observation synthetic_observation(const SceneSpec &spec, const DensityVolume &truth, const Image &sat,
                                         const SatelliteCamera &sat_cam, const PanoramaCamera &cam,
                                         std::size_t samples, TargetSet targets, Threads threads = {}) {
    const OracleMaps oracle = oracle_ground_truth(spec, cam);
    Observation o{cam, oracle.sky_mask, {}};
    if (targets.depth) {
        o.targets.depth = oracle.depth;
    }
    if (targets.opacity) {
        o.targets.opacity = oracle.opacity;
    }
    if (targets.color) {
        RenderOptions opt;
        opt.samples = samples;
        opt.threads = threads;
        o.targets.color = render_panorama(truth, sat, sat_cam, cam, opt).color;
    }
    return o;
}

/// Synthetic fitting problem described by a run configuration.
struct SyntheticRun {
    SceneSpec spec;
    SatelliteCamera sat_cam;
    Image satellite;
    DensityVolume truth;
    std::vector<Observation> train;
    std::vector<Observation> heldout;
};

inline SyntheticRun prepare_run(const io::RunConfig &rc) {
    SceneSpec spec = io::read_scene(rc.scene_path);
    spec.frame.max_height = rc.fit.max_height;
    const SatelliteCamera sat_cam = SatelliteCamera::covering(spec.frame, rc.sat_height, rc.sat_width);
    Image sat = render_satellite(spec, sat_cam);
    BakedScene baked = bake_scene(spec, rc.fit.nx, rc.fit.ny, rc.fit.nz);
    SyntheticRun run{spec, sat_cam, std::move(sat), std::move(baked.volume), {}, {}};
    const TargetSet targets{rc.target_depth, rc.target_opacity, rc.target_color};
    for (const io::Pose &p : rc.train_poses) {
        run.train.push_back(synthetic_observation(run.spec, run.truth, run.satellite, run.sat_cam,
                                                  p.camera(rc.pano_height, rc.pano_width), rc.fit.samples_per_ray,
                                                  targets, rc.fit.threads));
    }
    for (const io::Pose &p : rc.heldout_poses) {
        run.heldout.push_back(synthetic_observation(run.spec, run.truth, run.satellite, run.sat_cam,
                                                    p.camera(rc.pano_height, rc.pano_width), rc.fit.samples_per_ray,
                                                    targets, rc.fit.threads));
    }
    return run;
}

} // namespace panovol
