#include "skybench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace skybench {

namespace {

PixelRect window_rect(const PointPct& point, int window, int width, int height) {
    PixelCoord c = point_to_pixel(point, width, height);
    const int half = window / 2;
    PixelRect r;
    r.x0 = std::max(0, c.x - half);
    r.y0 = std::max(0, c.y - half);
    r.x1 = std::min(width, c.x + half + 1);
    r.y1 = std::min(height, c.y + half + 1);
    return r;
}

bool near(double a, double b) { return std::fabs(a - b) < 1e-9; }

std::string gray_hex(double unit_value) {
    int v = static_cast<int>(std::lround(std::clamp(unit_value, 0.0, 1.0) * 255.0));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02X%02X%02X", v, v, v);
    return buf;
}

}  // namespace

MetricWeights MetricWeights::hard() {
    MetricWeights w;
    w.sky_visibility.edge_penalty = 0.025;
    return w;
}

void MetricWeights::validate() const {
    auto nonneg = [](std::initializer_list<double> vs) {
        for (double v : vs)
            if (v < 0) return false;
        return true;
    };
    if (!nonneg({density.bcr, density.far, density.svf_comp, density.edge_density,
                 density.darkness}) ||
        !nonneg({openness.openness_index, openness.mean_svf, openness.low_building,
                 openness.terrain_flatness, openness.visual_simplicity}) ||
        !nonneg({sky_visibility.svf, sky_visibility.building_penalty,
                 sky_visibility.edge_penalty, sky_visibility.window_norm}) ||
        !nonneg({visibility_range.viewshed, visibility_range.svf_context,
                 visibility_range.terrain}))
        throw ValidationError("metric weights must be non-negative");

    const double dsum = density.bcr + density.far + density.svf_comp +
                        density.edge_density + density.darkness;
    const double osum = openness.openness_index + openness.mean_svf +
                        openness.low_building + openness.terrain_flatness +
                        openness.visual_simplicity;
    if (!near(dsum, 1.0)) throw ValidationError("density weights must sum to 1.0");
    if (!near(osum, 1.0)) throw ValidationError("openness weights must sum to 1.0");
    if (!near(sky_visibility.edge_penalty, 0.05) &&
        !near(sky_visibility.edge_penalty, 0.025))
        throw ValidationError("edge penalty weight must be 0.05 or 0.025");
}

double openness_index(double mean_svf, double std_svf) {
    return std::clamp((mean_svf + 0.5 * std_svf) / 1.25, 0.0, 1.0);
}

double terrain_flatness(double std_h) { return std::exp(-std_h / 5.0); }

double visual_simplicity(double edge_var) { return std::exp(-edge_var / 500.0); }

double terrain_roughness(double std_h) {
    const double d = std_h - 10.0;
    return std::exp(-d * d / (2.0 * 10.0 * 10.0));
}

double bcr(const SegRaster& seg, const RegionPct& region) {
    return class_ratio(seg, region, {"buildings"});
}

double avg_floors(const Raster& dsm, const SegRaster& seg, const RegionPct& region) {
    PixelRect r = region_to_pixels(region, dsm.width, dsm.height);
    const int building = landcover_id("buildings");
    double sum = 0;
    long long count = 0;
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
            if (seg.at(x, y) != building) continue;
            sum += std::min(kMaxFloors, dsm.at(x, y) / kFloorHeightMeters);
            ++count;
        }
    }
    return count ? sum / count : 0.0;
}

double far(double bcr_value, double avg_floors_value) {
    return std::min(1.0, bcr_value * avg_floors_value / kFarNorm);
}

double window_building_fraction(const SegRaster& seg, const PointPct& point, int window) {
    PixelRect r = window_rect(point, window, seg.width, seg.height);
    const int building = landcover_id("buildings");
    long long hits = 0;
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
            if (seg.at(x, y) == building) ++hits;
    return static_cast<double>(hits) / static_cast<double>(r.pixel_count());
}

double building_penalty(const SegRaster& seg, const PointPct& point, int window,
                        double norm) {
    return 0.3 * window_building_fraction(seg, point, window) * norm;
}

double edge_penalty(const Raster& edges, double scene_p99, const PointPct& point,
                    int window) {
    if (scene_p99 <= 0) return 0.0;
    PixelRect r = window_rect(point, window, edges.width, edges.height);
    double sum = 0;
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) sum += edges.at(x, y);
    const double mean = sum / static_cast<double>(r.pixel_count());
    return std::clamp(mean / scene_p99, 0.0, 1.0);
}

double edge_penalty(const Raster& edges, const PointPct& point, int window) {
    return edge_penalty(edges, raster_quantile(edges, 0.99), point, window);
}

RegionStats window_stats(const Raster& raster, const PointPct& point, int window) {
    return rect_stats(raster, window_rect(point, window, raster.width, raster.height));
}

double urban_density_score(const RegionFeatures& f, const MetricWeights& w) {
    // Canopy is not urban mass: the SVF complement is zeroed in
    // nature-dominant regions.
    const double svf_comp =
        f.nature_ratio > kNatureDominantThreshold ? 0.0 : 1.0 - f.mean_svf;
    const double score = w.density.bcr * f.bcr + w.density.far * f.far +
                         w.density.svf_comp * svf_comp +
                         w.density.edge_density * f.edge_density +
                         w.density.darkness * (1.0 - f.brightness);
    return std::clamp(score, 0.0, 1.0);
}

double spatial_openness_score(const RegionFeatures& f, const MetricWeights& w) {
    const double score = w.openness.openness_index * openness_index(f.mean_svf, f.std_svf) +
                         w.openness.mean_svf * f.mean_svf +
                         w.openness.low_building * (1.0 - f.building_ratio) +
                         w.openness.terrain_flatness * terrain_flatness(f.std_h) +
                         w.openness.visual_simplicity * visual_simplicity(f.edge_var);
    return std::clamp(score, 0.0, 1.0);
}

double sky_visibility_score(double svf, double bpen, double epen, const MetricWeights& w) {
    const double bpen_norm = bpen / 0.3;
    return w.sky_visibility.svf * svf -
           w.sky_visibility.building_penalty * bpen_norm * w.sky_visibility.window_norm -
           w.sky_visibility.edge_penalty * epen;
}

double visibility_range_score(double viewshed, double svf_ctx, double roughness,
                              const MetricWeights& w) {
    return std::clamp(w.visibility_range.viewshed * viewshed +
                          w.visibility_range.svf_context * svf_ctx +
                          w.visibility_range.terrain * roughness,
                      0.0, 1.0);
}

RegionFeatures region_features(const SceneContext& scene, const RegionPct& region) {
    const Raster& dsm = scene.dsm();
    PixelRect rect = region_to_pixels(region, dsm.width, dsm.height);

    RegionFeatures f;
    RegionStats svf_s = rect_stats(scene.svf(), rect);
    f.mean_svf = svf_s.mean;
    f.std_svf = svf_s.stddev;
    RegionStats h_s = rect_stats(dsm, rect);
    f.mean_h = h_s.mean;
    f.std_h = h_s.stddev;

    f.bcr = rect_class_ratio(scene.seg(), rect, {"buildings"});
    f.building_ratio = f.bcr;
    f.far = far(f.bcr, avg_floors(dsm, scene.seg(), region));
    f.nature_ratio =
        rect_class_ratio(scene.seg(), rect, {"agricultural", "forest", "grassland", "water"});

    RegionStats e_s = rect_stats(scene.edges, rect);
    f.edge_var = e_s.stddev * e_s.stddev;
    long long above = 0;
    for (int y = rect.y0; y < rect.y1; ++y)
        for (int x = rect.x0; x < rect.x1; ++x)
            if (scene.edges.at(x, y) > scene.edge_p75) ++above;
    f.edge_density = static_cast<double>(above) / static_cast<double>(rect.pixel_count());

    f.brightness = rect_stats(scene.brightness(), rect).mean;
    return f;
}

namespace {

// 4-connected same-class patches.
void label_patches(const SegRaster& seg, int& patch_count, double& largest_ratio) {
    const int w = seg.width, h = seg.height;
    std::vector<char> seen(static_cast<size_t>(w) * h, 0);
    std::vector<int> stack;
    patch_count = 0;
    long long largest = 0;
    for (int start = 0; start < w * h; ++start) {
        if (seen[start]) continue;
        const uint8_t cls = seg.classes[start];
        ++patch_count;
        long long size = 0;
        stack.push_back(start);
        seen[start] = 1;
        while (!stack.empty()) {
            int idx = stack.back();
            stack.pop_back();
            ++size;
            const int x = idx % w, y = idx / w;
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
                int nidx = ny[k] * w + nx[k];
                if (seen[nidx] || seg.classes[nidx] != cls) continue;
                seen[nidx] = 1;
                stack.push_back(nidx);
            }
        }
        largest = std::max(largest, size);
    }
    largest_ratio = static_cast<double>(largest) / (static_cast<double>(w) * h);
}

}  // namespace

SceneStatistics scene_statistics(const SceneContext& scene, const MetricWeights& weights) {
    const Raster& dsm = scene.dsm();
    const SegRaster& seg = scene.seg();
    const RegionPct full{0, 0, 100, 100};
    const PixelRect full_rect{0, 0, dsm.width, dsm.height};

    SceneStatistics st;
    st.scene_id = scene.bundle.scene_id;

    RegionStats svf_s = rect_stats(scene.svf(), full_rect);
    st.svf_mean = svf_s.mean;
    st.svf_std = svf_s.stddev;
    st.svf_min = svf_s.min;
    st.svf_max = svf_s.max;
    st.svf_quartiles = {svf_s.q1, svf_s.median, svf_s.q3};

    RegionStats h_s = rect_stats(dsm, full_rect);
    st.height_mean = h_s.mean;
    st.height_std = h_s.stddev;
    st.max_height = h_s.max;
    st.building_coverage_ratio = rect_class_ratio(seg, full_rect, {"buildings"});

    st.building_ratio = st.building_coverage_ratio;
    st.vegetation_ratio = rect_class_ratio(seg, full_rect, {"agricultural", "forest", "grassland"});
    st.road_ratio = rect_class_ratio(seg, full_rect, {"roads", "railways"});
    st.water_ratio = rect_class_ratio(seg, full_rect, {"water"});
    st.other_ratio = rect_class_ratio(seg, full_rect, {"residential", "bare_soil", "other"});

    RegionFeatures f = region_features(scene, full);
    st.edge_density = f.edge_density;
    label_patches(seg, st.patch_count, st.largest_patch_ratio);

    RegionStats b_s = rect_stats(scene.brightness(), full_rect);
    st.brightness_mean = b_s.mean * 255.0;
    st.contrast_std = b_s.stddev * 255.0;
    st.dominant_colors = {gray_hex(b_s.q1), gray_hex(b_s.median), gray_hex(b_s.q3)};

    st.urban_density = urban_density_score(f, weights);
    st.openness = openness_index(st.svf_mean, st.svf_std);
    st.solar_potential = st.svf_mean;

    for (int row = 0; row < 3; ++row) {
        for (int col = 0; col < 3; ++col) {
            PixelRect cell;
            cell.x0 = col * dsm.width / 3;
            cell.x1 = (col + 1) * dsm.width / 3;
            cell.y0 = row * dsm.height / 3;
            cell.y1 = (row + 1) * dsm.height / 3;
            GridCellStats& gc = st.grid3x3[row * 3 + col];
            gc.row = row;
            gc.col = col;
            gc.mean_svf = rect_stats(scene.svf(), cell).mean;
            gc.mean_height = rect_stats(dsm, cell).mean;
            std::array<long long, 10> counts{};
            for (int y = cell.y0; y < cell.y1; ++y)
                for (int x = cell.x0; x < cell.x1; ++x) ++counts[seg.at(x, y)];
            int best = 0;
            for (int k = 1; k < 10; ++k)
                if (counts[k] > counts[best]) best = k;
            gc.dominant_class = landcover_vocabulary()[best];
        }
    }
    return st;
}

std::string scene_statistics_json(const SceneStatistics& st) {
    using json = nlohmann::ordered_json;
    json j;
    j["scene_id"] = st.scene_id;
    j["svf_statistics"] = {{"mean", st.svf_mean},
                           {"std", st.svf_std},
                           {"min", st.svf_min},
                           {"max", st.svf_max},
                           {"quartiles", st.svf_quartiles}};
    j["height_statistics"] = {{"mean", st.height_mean},
                              {"std", st.height_std},
                              {"building_coverage_ratio", st.building_coverage_ratio},
                              {"max_height", st.max_height}};
    j["land_cover_statistics"] = {{"building_ratio", st.building_ratio},
                                  {"vegetation_ratio", st.vegetation_ratio},
                                  {"road_ratio", st.road_ratio},
                                  {"water_ratio", st.water_ratio},
                                  {"other_ratio", st.other_ratio}};
    j["spatial_statistics"] = {{"edge_density", st.edge_density},
                               {"patch_count", st.patch_count},
                               {"largest_patch_ratio", st.largest_patch_ratio}};
    j["rgb_statistics"] = {{"brightness_mean", st.brightness_mean},
                           {"contrast_std", st.contrast_std},
                           {"dominant_colors", st.dominant_colors}};
    j["derived_metrics"] = {{"urban_density_score", st.urban_density},
                            {"openness_index", st.openness},
                            {"solar_potential", st.solar_potential}};
    json cells = json::array();
    for (const auto& gc : st.grid3x3) {
        cells.push_back({{"row", gc.row},
                         {"col", gc.col},
                         {"mean_svf", gc.mean_svf},
                         {"mean_height", gc.mean_height},
                         {"dominant_class", gc.dominant_class}});
    }
    j["grid3x3"] = cells;
    return j.dump(2) + "\n";
}

}  // namespace skybench
