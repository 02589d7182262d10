#pragma once

// Composite spatial metrics: the tier-1/tier-2 scoring functions (urban
// density, spatial openness, sky visibility, visibility range) with their
// derived terms, and the scene-level statistics payload.

#include <array>
#include <string>
#include <vector>

#include "skybench/scene.hpp"

namespace skybench {

// Coefficients of the composite scores. The density and openness groups are
// convex (sum to 1); sky visibility is a penalized score whose edge weight
// selects the standard (0.05) or hard (0.025) setting.
struct MetricWeights {
    struct Density {
        double bcr = 0.5;
        double far = 0.25;
        double svf_comp = 0.15;
        double edge_density = 0.05;
        double darkness = 0.05;
    } density;
    struct Openness {
        double openness_index = 0.5;
        double mean_svf = 0.25;
        double low_building = 0.15;
        double terrain_flatness = 0.05;
        double visual_simplicity = 0.05;
    } openness;
    struct SkyVisibility {
        double svf = 0.7;
        double building_penalty = 0.3;
        double edge_penalty = 0.05;  // 0.05 standard, 0.025 hard
        double window_norm = 1.0;
    } sky_visibility;
    struct VisibilityRange {
        double viewshed = 0.6;
        double svf_context = 0.25;
        double terrain = 0.15;
    } visibility_range;

    static MetricWeights standard() { return {}; }
    static MetricWeights hard();

    // Rejects weight sets outside the documented configuration space. The
    // sensitivity study mutates copies without re-validating on purpose.
    void validate() const;
};

// Region-level feature vector feeding the composite scores.
struct RegionFeatures {
    double mean_svf = 0, std_svf = 0;
    double mean_h = 0, std_h = 0;
    double bcr = 0;
    double far = 0;
    double building_ratio = 0;
    double nature_ratio = 0;  // agricultural + forest + grassland + water
    double edge_var = 0;
    double edge_density = 0;
    double brightness = 0;
};

inline constexpr double kFloorHeightMeters = 3.5;
inline constexpr double kMaxFloors = 20.0;
inline constexpr double kFarNorm = 5.0;
inline constexpr double kNatureDominantThreshold = 0.8;
inline constexpr int kPenaltyWindowPixels = 21;

// --- derived terms ---------------------------------------------------------

double openness_index(double mean_svf, double std_svf);   // (mean + 0.5 std) / 1.25
double terrain_flatness(double std_h);                    // exp(-std_h / 5)
double visual_simplicity(double edge_var);                // exp(-edge_var / 500)
double terrain_roughness(double std_h);                   // exp(-(std_h - 10)^2 / 200)

double bcr(const SegRaster& seg, const RegionPct& region);
double avg_floors(const Raster& dsm, const SegRaster& seg, const RegionPct& region);
double far(double bcr_value, double avg_floors_value);    // min(1, bcr * floors / 5)

// Penalty terms for point-based sky visibility. building_penalty returns the
// raw 0.3-scaled value; edge_penalty is the window mean gradient magnitude
// normalized by the scene's 99th-percentile gradient, clamped to [0,1].
double building_penalty(const SegRaster& seg, const PointPct& point,
                        int window = kPenaltyWindowPixels, double norm = 1.0);
double edge_penalty(const Raster& edges, const PointPct& point,
                    int window = kPenaltyWindowPixels);
double edge_penalty(const Raster& edges, double scene_p99, const PointPct& point,
                    int window = kPenaltyWindowPixels);

// Fraction of building pixels in the clipped square window around a point.
double window_building_fraction(const SegRaster& seg, const PointPct& point, int window);

// Statistics over the clipped square window centered on a point.
RegionStats window_stats(const Raster& raster, const PointPct& point, int window);

// --- composite scores ------------------------------------------------------

double urban_density_score(const RegionFeatures& f, const MetricWeights& w);
double spatial_openness_score(const RegionFeatures& f, const MetricWeights& w);
// `bpen` is the raw building_penalty output; it is divided back by 0.3 inside
// so the 0.3 coefficient is not applied twice.
double sky_visibility_score(double svf, double bpen, double epen, const MetricWeights& w);
double visibility_range_score(double viewshed, double svf_ctx, double roughness,
                              const MetricWeights& w);

// All features of one region of a prepared scene.
RegionFeatures region_features(const SceneContext& scene, const RegionPct& region);

// --- scene statistics payload ----------------------------------------------

struct GridCellStats {
    int row = 0, col = 0;
    double mean_svf = 0;
    double mean_height = 0;
    std::string dominant_class;
};

struct SceneStatistics {
    std::string scene_id;
    double svf_mean = 0, svf_std = 0, svf_min = 0, svf_max = 0;
    std::array<double, 3> svf_quartiles{};
    double height_mean = 0, height_std = 0;
    double building_coverage_ratio = 0, max_height = 0;
    double building_ratio = 0, vegetation_ratio = 0, road_ratio = 0;
    double water_ratio = 0, other_ratio = 0;
    double edge_density = 0;
    int patch_count = 0;
    double largest_patch_ratio = 0;
    double brightness_mean = 0, contrast_std = 0;  // 0..255 scale
    std::vector<std::string> dominant_colors;
    double urban_density = 0;
    double openness = 0;
    double solar_potential = 0;  // provisional: mean SVF proxy
    std::array<GridCellStats, 9> grid3x3{};
};

SceneStatistics scene_statistics(const SceneContext& scene,
                                 const MetricWeights& weights = MetricWeights::standard());

// Serialized form (stable field order, exact schema names).
std::string scene_statistics_json(const SceneStatistics& stats);

}  // namespace skybench
