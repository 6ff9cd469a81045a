// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panovol/camera.hpp"
#include "panovol/config.hpp"
#include "panovol/core.hpp"
#include "panovol/io.hpp"
#include "panovol/metrics.hpp"
#include "panovol/optimize.hpp"
#include "panovol/parallel.hpp"
#include "panovol/pipeline.hpp"
#include "panovol/render.hpp"
#include "panovol/supervise.hpp"
#include "panovol/synth.hpp"
#include "panovol/volume.hpp"
