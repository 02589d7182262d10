#include "skybench/svf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace skybench {

namespace {
constexpr double kPi = 3.14159265358979323846;

void check_origin(const Raster& dsm, PixelCoord origin) {
    if (!dsm.in_bounds(origin.x, origin.y))
        throw ValidationError("origin pixel out of raster bounds");
}
}  // namespace

void SvfParams::validate(double resolution) const {
    if (n_azimuths < 4) throw ValidationError("n_azimuths must be >= 4");
    double s = effective_step(resolution);
    if (!(s > 0)) throw ValidationError("step must be positive");
    if (!(max_radius >= s)) throw ValidationError("max_radius must be >= step");
}

void ViewshedParams::validate() const {
    if (observer_height < 0) throw ValidationError("observer_height must be >= 0");
    if (!(max_radius > 0)) throw ValidationError("max_radius must be positive");
}

double horizon_angle(const Raster& dsm, PixelCoord origin, double azimuth,
                     const SvfParams& params) {
    check_origin(dsm, origin);
    params.validate(dsm.resolution);

    const double res = dsm.resolution;
    const double step = params.effective_step(res);
    const double h0 = dsm.at(origin.x, origin.y);
    const double dx = std::cos(azimuth);
    const double dy = std::sin(azimuth);

    double best = 0.0;
    for (double t = step; t <= params.max_radius + 1e-9; t += step) {
        const double fx = origin.x + dx * (t / res);
        const double fy = origin.y + dy * (t / res);
        const int ix = static_cast<int>(std::lround(fx));
        const int iy = static_cast<int>(std::lround(fy));
        if (!dsm.in_bounds(ix, iy)) break;
        if (ix == origin.x && iy == origin.y) continue;
        const double dist = std::hypot((ix - origin.x) * res, (iy - origin.y) * res);
        const double ang = std::atan2(dsm.at(ix, iy) - h0, dist);
        if (ang > best) best = ang;
    }
    return best;
}

double svf_at(const Raster& dsm, PixelCoord origin, const SvfParams& params) {
    params.validate(dsm.resolution);
    double sum = 0.0;
    for (int i = 0; i < params.n_azimuths; ++i) {
        // Sector midpoints keep rays off the grid axes and halve the
        // integration error for obstructions with sharp azimuthal edges.
        const double az = 2.0 * kPi * (i + 0.5) / params.n_azimuths;
        const double beta = horizon_angle(dsm, origin, az, params);
        const double c = std::cos(beta);
        sum += c * c;
    }
    return std::clamp(sum / params.n_azimuths, 0.0, 1.0);
}

Raster svf_raster(const Raster& dsm, const SvfParams& params, int threads) {
    dsm.validate();
    params.validate(dsm.resolution);
    Raster out(dsm.width, dsm.height, dsm.resolution, RasterKind::Svf);

    auto run_rows = [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < dsm.width; ++x)
                out.at(x, y) = svf_at(dsm, {x, y}, params);
    };

    threads = std::clamp(threads, 1, dsm.height);
    if (threads == 1) {
        run_rows(0, dsm.height);
        return out;
    }
    std::vector<std::thread> pool;
    const int rows_per = (dsm.height + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int y0 = t * rows_per;
        const int y1 = std::min(dsm.height, y0 + rows_per);
        if (y0 < y1) pool.emplace_back(run_rows, y0, y1);
    }
    for (auto& th : pool) th.join();
    return out;
}

std::array<ViewshedRay, 8> viewshed_rays(const Raster& dsm, PixelCoord origin,
                                         const ViewshedParams& params) {
    check_origin(dsm, origin);
    params.validate();

    static constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    static constexpr int kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

    const double res = dsm.resolution;
    const double eye = dsm.at(origin.x, origin.y) + params.observer_height;

    std::array<ViewshedRay, 8> rays;
    for (int d = 0; d < 8; ++d) {
        const int dx = kDx[d], dy = kDy[d];
        const double step_len = res * std::hypot(static_cast<double>(dx),
                                                 static_cast<double>(dy));
        int steps_to_edge = std::numeric_limits<int>::max();
        if (dx > 0) steps_to_edge = std::min(steps_to_edge, dsm.width - 1 - origin.x);
        if (dx < 0) steps_to_edge = std::min(steps_to_edge, origin.x);
        if (dy > 0) steps_to_edge = std::min(steps_to_edge, dsm.height - 1 - origin.y);
        if (dy < 0) steps_to_edge = std::min(steps_to_edge, origin.y);
        const int steps = std::min(steps_to_edge,
                                   static_cast<int>(std::floor(params.max_radius / step_len + 1e-9)));
        if (steps <= 0) continue;  // boundary pixel facing outward: bound stays 0
        rays[d].bound = steps * step_len;

        double running_max = -std::numeric_limits<double>::infinity();
        for (int s = 1; s <= steps; ++s) {
            const double dist = s * step_len;
            const double h = dsm.at(origin.x + s * dx, origin.y + s * dy);
            const double ang = std::atan2(h - eye, dist);
            if (ang >= running_max) {
                running_max = ang;
                rays[d].blocked = dist;
            }
        }
    }
    return rays;
}

double viewshed_range(const Raster& dsm, PixelCoord origin, const ViewshedParams& params) {
    const auto rays = viewshed_rays(dsm, origin, params);
    double sum = 0.0;
    for (const auto& ray : rays)
        // rays with no room to march count as open
        sum += ray.bound > 0 ? std::min(1.0, ray.blocked / ray.bound) : 1.0;
    return std::clamp(sum / 8.0, 0.0, 1.0);
}

}  // namespace skybench
