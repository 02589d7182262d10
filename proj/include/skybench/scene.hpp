#pragma once

// Scene loading and per-scene derived rasters. A scene directory holds
// dsm.grid and seg.grid, plus optional svf.grid and brightness.grid; missing
// modalities are derived (svf by horizon scanning, brightness as the 0.5
// fallback).

#include "skybench/raster.hpp"
#include "skybench/svf.hpp"

namespace skybench {

/// A bundle with every modality materialized, plus the Sobel edge raster and
/// the scene-level gradient percentiles the metric layer normalizes against.
struct SceneContext {
    SceneBundle bundle;
    Raster edges;
    double edge_p75 = 0;
    double edge_p99 = 0;

    const Raster& dsm() const { return bundle.dsm; }
    const SegRaster& seg() const { return bundle.seg; }
    const Raster& svf() const { return *bundle.svf; }
    const Raster& brightness() const { return *bundle.brightness; }
};

SceneBundle load_scene_dir(const std::string& dir);

SceneContext prepare_scene(SceneBundle bundle, const SvfParams& svf_params = {},
                           int threads = 1);

// Quantile of all raster values, linear interpolation between order statistics.
double raster_quantile(const Raster& raster, double q);

}  // namespace skybench
