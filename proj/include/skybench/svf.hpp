#pragma once

// Sky view factor from azimuthal horizon scanning over an elevation raster,
// and 8-direction viewshed (maximum line-of-sight distance) analysis.

#include <array>

#include "skybench/raster.hpp"

namespace skybench {

struct SvfParams {
    int n_azimuths = 16;      // >= 4
    double max_radius = 100;  // meters
    double step = 0;          // meters; 0 means "use the raster resolution"

    double effective_step(double resolution) const { return step > 0 ? step : resolution; }
    void validate(double resolution) const;
};

struct ViewshedParams {
    static constexpr int n_directions = 8;
    double observer_height = 1.5;  // meters above the surface
    double max_radius = 200;       // meters

    void validate() const;
};

// Maximum terrain elevation angle along one ray, clamped to >= 0 (terrain
// below the origin never adds sky obstruction). The ray is sampled every
// `step` meters out to max_radius or the grid boundary; sample positions snap
// to the nearest cell and angles use the true center-to-center distance.
// Azimuth is measured from +x (columns) toward +y (rows), in radians.
double horizon_angle(const Raster& dsm, PixelCoord origin, double azimuth,
                     const SvfParams& params);

// Isotropic-sky estimate: mean of cos^2(horizon angle) over n_azimuths rays.
// Azimuths are placed at sector midpoints (i + 0.5) * 2*pi / n.
double svf_at(const Raster& dsm, PixelCoord origin, const SvfParams& params);

// Per-pixel svf_at over the whole grid; rows may be partitioned across
// worker threads, output is identical for any thread count.
Raster svf_raster(const Raster& dsm, const SvfParams& params, int threads = 1);

// One compass ray: distance to the farthest visible cell and the
// normalization bound (the reachable sampled distance within max_radius and
// the grid). Directions are ordered E, SE, S, SW, W, NW, N, NE.
struct ViewshedRay {
    double blocked = 0;
    double bound = 0;
};

// Per-direction line-of-sight analysis from the observer eye point
// (surface + observer_height). A cell is visible when its elevation angle is
// not below any nearer cell's angle.
std::array<ViewshedRay, 8> viewshed_rays(const Raster& dsm, PixelCoord origin,
                                         const ViewshedParams& params);

// Mean over the 8 directions of min(1, blocked / bound), in [0,1]; boundary-
// facing rays with no room count as open.
double viewshed_range(const Raster& dsm, PixelCoord origin, const ViewshedParams& params);

}  // namespace skybench
