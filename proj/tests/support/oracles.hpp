#pragma once

// Test-only reference implementations. These deliberately re-derive results
// through different code paths (dense sampling, per-cell segment tests,
// naive summation) so the library kernels are checked against independent
// math, not against themselves.

#include <algorithm>
#include <cmath>
#include <vector>

#include "skybench/raster.hpp"

namespace oracle {

// Dense-sampling horizon angle: many more ray samples than the production
// kernel (step = resolution/4 by default), same geometric definition.
inline double horizon_angle_dense(const skybench::Raster& dsm, skybench::PixelCoord origin,
                                  double azimuth, double max_radius, double step) {
    const double res = dsm.resolution;
    const double h0 = dsm.at(origin.x, origin.y);
    const double dx = std::cos(azimuth), dy = std::sin(azimuth);
    double best = 0.0;
    for (double t = step; t <= max_radius + 1e-9; t += step) {
        const double fx = origin.x + dx * (t / res);
        const double fy = origin.y + dy * (t / res);
        const int ix = static_cast<int>(std::lround(fx));
        const int iy = static_cast<int>(std::lround(fy));
        if (ix < 0 || ix >= dsm.width || iy < 0 || iy >= dsm.height) break;
        if (ix == origin.x && iy == origin.y) continue;
        const double dxm = (ix - origin.x) * res;
        const double dym = (iy - origin.y) * res;
        const double ang = std::atan2(dsm.at(ix, iy) - h0, std::hypot(dxm, dym));
        best = std::max(best, ang);
    }
    return best;
}

// Dense SVF: >= 360 azimuths at fine radial steps.
inline double svf_dense(const skybench::Raster& dsm, skybench::PixelCoord origin,
                        double max_radius, int n_azimuths = 360, double step_div = 4.0) {
    const double step = dsm.resolution / step_div;
    double sum = 0.0;
    for (int i = 0; i < n_azimuths; ++i) {
        const double az = 2.0 * M_PI * (i + 0.5) / n_azimuths;
        const double beta = horizon_angle_dense(dsm, origin, az, max_radius, step);
        const double c = std::cos(beta);
        sum += c * c;
    }
    return sum / n_azimuths;
}

// Brute-force line-of-sight blockage distance along one compass direction:
// a cell is visible iff the straight segment from the eye to the cell top
// stays on or above every intermediate cell top. Returns the distance of the
// farthest visible cell (0 when no step fits).
inline double los_blockage_distance(const skybench::Raster& dsm, skybench::PixelCoord origin,
                                    int dx, int dy, double observer_height,
                                    double max_radius) {
    const double res = dsm.resolution;
    const double eye = dsm.at(origin.x, origin.y) + observer_height;
    const double step_len = res * std::hypot(static_cast<double>(dx), static_cast<double>(dy));

    int steps_to_edge = 1 << 30;
    if (dx > 0) steps_to_edge = std::min(steps_to_edge, dsm.width - 1 - origin.x);
    if (dx < 0) steps_to_edge = std::min(steps_to_edge, origin.x);
    if (dy > 0) steps_to_edge = std::min(steps_to_edge, dsm.height - 1 - origin.y);
    if (dy < 0) steps_to_edge = std::min(steps_to_edge, origin.y);
    const int steps =
        std::min(steps_to_edge, static_cast<int>(std::floor(max_radius / step_len + 1e-9)));

    double farthest = 0.0;
    for (int s = 1; s <= steps; ++s) {
        const double ds = s * step_len;
        const double hs = dsm.at(origin.x + s * dx, origin.y + s * dy);
        bool visible = true;
        for (int j = 1; j < s && visible; ++j) {
            const double dj = j * step_len;
            const double hj = dsm.at(origin.x + j * dx, origin.y + j * dy);
            const double sight = eye + (hs - eye) * (dj / ds);
            if (hj > sight + 1e-9) visible = false;
        }
        if (visible) farthest = ds;
    }
    return farthest;
}

// Reachable sampled distance for the same direction (the normalization bound
// the production code uses).
inline double los_bound(const skybench::Raster& dsm, skybench::PixelCoord origin, int dx,
                        int dy, double max_radius) {
    const double res = dsm.resolution;
    const double step_len = res * std::hypot(static_cast<double>(dx), static_cast<double>(dy));
    int steps_to_edge = 1 << 30;
    if (dx > 0) steps_to_edge = std::min(steps_to_edge, dsm.width - 1 - origin.x);
    if (dx < 0) steps_to_edge = std::min(steps_to_edge, origin.x);
    if (dy > 0) steps_to_edge = std::min(steps_to_edge, dsm.height - 1 - origin.y);
    if (dy < 0) steps_to_edge = std::min(steps_to_edge, origin.y);
    const int steps =
        std::min(steps_to_edge, static_cast<int>(std::floor(max_radius / step_len + 1e-9)));
    return steps * step_len;
}

// Single-pass naive statistics used to cross-check rect_stats.
struct NaiveStats {
    double mean = 0, stddev = 0, min = 0, max = 0;
};

inline NaiveStats naive_stats(const std::vector<double>& vals) {
    NaiveStats s;
    s.min = vals[0];
    s.max = vals[0];
    double sum = 0;
    for (double v : vals) {
        sum += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.mean = sum / vals.size();
    double sq = 0;
    for (double v : vals) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / vals.size());
    return s;
}

// Direct Sobel convolution with clamped sampling, written separately from the
// production loop.
inline skybench::Raster sobel_direct(const skybench::Raster& in) {
    static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    skybench::Raster out(in.width, in.height, in.resolution, skybench::RasterKind::Brightness);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            double gx = 0, gy = 0;
            for (int j = -1; j <= 1; ++j) {
                for (int i = -1; i <= 1; ++i) {
                    const int sx = std::clamp(x + i, 0, in.width - 1);
                    const int sy = std::clamp(y + j, 0, in.height - 1);
                    gx += kx[j + 1][i + 1] * in.at(sx, sy);
                    gy += ky[j + 1][i + 1] * in.at(sx, sy);
                }
            }
            out.at(x, y) = std::sqrt(gx * gx + gy * gy);
        }
    }
    return out;
}

}  // namespace oracle
