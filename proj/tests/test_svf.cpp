#include <doctest.h>

#include <cmath>

#include "skybench/qa.hpp"
#include "skybench/svf.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

using namespace skybench;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("flat terrain: open hemisphere everywhere") {
    Raster dsm = scenes::flat_dsm(32, 5.0);
    SvfParams p;
    CHECK(horizon_angle(dsm, {16, 16}, 0.7, p) == doctest::Approx(0.0));
    CHECK(svf_at(dsm, {16, 16}, p) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(viewshed_range(dsm, {16, 16}, ViewshedParams{}) == doctest::Approx(1.0));
}

TEST_CASE("single wall gives the right-triangle horizon angle") {
    Raster dsm = scenes::flat_dsm(48);
    scenes::add_block(dsm, 34, 0, 37, 48, 10.0);  // wall 10 px east of probe
    const PixelCoord origin{24, 24};
    CHECK(horizon_angle(dsm, origin, 0.0, SvfParams{}) == doctest::Approx(kPi / 4).epsilon(1e-12));
    // opposite direction stays flat
    CHECK(horizon_angle(dsm, origin, kPi, SvfParams{}) == doctest::Approx(0.0));
}

TEST_CASE("fully enclosed point sees no sky") {
    Raster dsm = scenes::ring_wall_dsm(16, 1, 2, 1e9);
    CHECK(svf_at(dsm, {8, 8}, SvfParams{}) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("half-plane wall matches the analytic value") {
    for (double deg : {30.0, 45.0}) {
        const double beta = deg * kPi / 180.0;
        const PixelCoord probe{56, 112};
        Raster dsm = scenes::half_plane_wall_dsm(224, probe, beta);
        const double analytic = 0.5 * (1.0 + std::cos(beta) * std::cos(beta));
        const double got = svf_at(dsm, probe, SvfParams{});
        CHECK(std::fabs(got - analytic) < 0.02);
        const double dense = oracle::svf_dense(dsm, probe, SvfParams{}.max_radius);
        CHECK(std::fabs(dense - analytic) < 0.02);
    }
}

TEST_CASE("horizon angle tracks the fine-step oracle on rolling terrain") {
    Raster dsm = scenes::rolling_terrain_dsm(96, 51, 0.1, 64.0);
    SvfParams p;
    double worst = 0;
    for (int px = 20; px <= 76; px += 14) {
        for (int py = 20; py <= 76; py += 14) {
            for (int i = 0; i < 16; ++i) {
                const double az = 2.0 * kPi * (i + 0.5) / 16;
                const double got = horizon_angle(dsm, {px, py}, az, p);
                const double expect = oracle::horizon_angle_dense(
                    dsm, {px, py}, az, p.max_radius, dsm.resolution / 4);
                worst = std::max(worst, std::fabs(got - expect));
            }
        }
    }
    CHECK(worst < 0.01);
}

TEST_CASE("svf is within range and monotone under obstruction growth") {
    Raster dsm = scenes::rolling_terrain_dsm(48, 9, 2.0, 26.0);
    scenes::add_block(dsm, 12, 12, 18, 18, 12.0);
    const PixelCoord origin{24, 26};
    SvfParams p;
    double base = svf_at(dsm, origin, p);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);

    SplitRng rng(77);
    for (int i = 0; i < 30; ++i) {
        Raster bumped = dsm;
        const int bx = static_cast<int>(rng.below(48));
        const int by = static_cast<int>(rng.below(48));
        if (bx == origin.x && by == origin.y) continue;
        bumped.at(bx, by) += 1.0 + 10.0 * rng.unit();
        const double v = svf_at(bumped, origin, p);
        CHECK(v <= base + 1e-12);
        // raising the same cell further never raises svf
        Raster bumped2 = bumped;
        bumped2.at(bx, by) += 5.0;
        CHECK(svf_at(bumped2, origin, p) <= v + 1e-12);
    }
}

TEST_CASE("doubling the azimuth count moves svf by less than 0.02") {
    Raster block = scenes::single_block_dsm(96, 10, 10.0);
    Raster canyon = scenes::street_canyon_dsm(96, 40, 56, 3, 10.0);
    Raster rolling = scenes::rolling_terrain_dsm(96, 4, 0.8, 40.0);
    SvfParams p16;
    SvfParams p32;
    p32.n_azimuths = 32;
    for (const Raster* dsm : {&block, &canyon, &rolling}) {
        for (int px = 24; px <= 72; px += 16) {
            for (int py = 24; py <= 72; py += 16) {
                const double a = svf_at(*dsm, {px, py}, p16);
                const double b = svf_at(*dsm, {px, py}, p32);
                CHECK(std::fabs(a - b) < 0.02);
            }
        }
    }
}

TEST_CASE("svf_raster equals per-pixel svf_at for any thread count") {
    Raster dsm = scenes::single_block_dsm(24, 4, 10.0);
    SvfParams p;
    p.max_radius = 30;
    Raster r1 = svf_raster(dsm, p, 1);
    Raster r3 = svf_raster(dsm, p, 3);
    CHECK(r1.values == r3.values);
    for (int y = 0; y < dsm.height; y += 5)
        for (int x = 0; x < dsm.width; x += 5)
            CHECK(r1.at(x, y) == doctest::Approx(svf_at(dsm, {x, y}, p)));
    for (double v : r1.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("ring wall viewshed blocks at the wall in every direction") {
    const int size = 64;
    Raster dsm = scenes::ring_wall_dsm(size, 5, 3, 50.0);
    const PixelCoord origin{size / 2, size / 2};
    ViewshedParams vp;

    // expected: blocked at the ring (Chebyshev radius 5) in all 8 directions
    double expect_sum = 0;
    static const int dxs[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    static const int dys[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    for (int d = 0; d < 8; ++d) {
        const double step_len = std::hypot(static_cast<double>(dxs[d]),
                                           static_cast<double>(dys[d]));
        const double blocked = 5.0 * step_len;
        const double bound = oracle::los_bound(dsm, origin, dxs[d], dys[d], vp.max_radius);
        expect_sum += blocked / bound;
        // cross-check against the per-cell LOS oracle
        CHECK(oracle::los_blockage_distance(dsm, origin, dxs[d], dys[d], vp.observer_height,
                                            vp.max_radius) == doctest::Approx(blocked));
    }
    CHECK(viewshed_range(dsm, origin, vp) == doctest::Approx(expect_sum / 8).epsilon(1e-9));
}

TEST_CASE("viewshed matches the brute-force LOS oracle on random terrain") {
    static const int dxs[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    static const int dys[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    ViewshedParams vp;
    SplitRng rng(303);
    for (int scene = 0; scene < 4; ++scene) {
        Raster dsm = scenes::rolling_terrain_dsm(64, 1000 + scene, 4.0, 20.0);
        scenes::add_block(dsm, 10 + scene * 3, 20, 16 + scene * 3, 26, 12.0);
        scenes::add_block(dsm, 40, 38, 47, 44, 9.0);
        for (int probe = 0; probe < 4; ++probe) {
            const PixelCoord origin{8 + static_cast<int>(rng.below(48)),
                                    8 + static_cast<int>(rng.below(48))};
            const auto rays = viewshed_rays(dsm, origin, vp);
            double sum = 0;
            for (int d = 0; d < 8; ++d) {
                const double step_len =
                    dsm.resolution * std::hypot(static_cast<double>(dxs[d]),
                                                static_cast<double>(dys[d]));
                const double blocked = oracle::los_blockage_distance(
                    dsm, origin, dxs[d], dys[d], vp.observer_height, vp.max_radius);
                const double bound = oracle::los_bound(dsm, origin, dxs[d], dys[d],
                                                       vp.max_radius);
                CHECK(rays[d].bound == doctest::Approx(bound));
                CHECK(std::fabs(rays[d].blocked - blocked) <= step_len + 1e-9);
                sum += bound > 0 ? std::min(1.0, blocked / bound) : 1.0;
            }
            const double got = viewshed_range(dsm, origin, vp);
            CHECK(std::fabs(got - sum / 8) < 0.05);
        }
    }
}

TEST_CASE("origin validation") {
    Raster dsm = scenes::flat_dsm(8);
    CHECK_THROWS_AS(horizon_angle(dsm, {8, 0}, 0.0, SvfParams{}), ValidationError);
    CHECK_THROWS_AS(viewshed_range(dsm, {-1, 0}, ViewshedParams{}), ValidationError);
    SvfParams bad;
    bad.n_azimuths = 2;
    CHECK_THROWS_AS(svf_at(dsm, {1, 1}, bad), ValidationError);
}
