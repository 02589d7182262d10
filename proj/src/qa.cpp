#include "skybench/qa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace skybench {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Category registry
// ---------------------------------------------------------------------------

const std::vector<Category>& all_categories() {
    static const std::vector<Category> cats = {
        {CategoryId::SunExposure, 1, AnswerFormat::PointChoice, 4},
        {CategoryId::SvfValue, 1, AnswerFormat::NumericSvf, 0},
        {CategoryId::RegionRanking, 1, AnswerFormat::Ranking, 3},
        {CategoryId::RegionalSvfVariability, 1, AnswerFormat::RegionChoice, 3},
        {CategoryId::HeightAverage, 1, AnswerFormat::NumericHeight, 0},
        {CategoryId::HighestRegion, 1, AnswerFormat::RegionChoice, 4},
        {CategoryId::TopLandUses, 1, AnswerFormat::MultiLabel, 0},
        {CategoryId::LandcoverType, 1, AnswerFormat::MultiLabel, 0},
        {CategoryId::SkyVisibility, 2, AnswerFormat::PointChoice, 4},
        {CategoryId::VisibilityRange, 2, AnswerFormat::PointChoice, 4},
        {CategoryId::SpatialOpenness, 2, AnswerFormat::RegionChoice, 4},
        {CategoryId::BuildingDensity, 2, AnswerFormat::RegionChoice, 4},
    };
    return cats;
}

const Category& category(CategoryId id) {
    for (const auto& c : all_categories())
        if (c.id == id) return c;
    throw ValidationError("unknown category id");
}

std::string to_string(CategoryId id) {
    switch (id) {
        case CategoryId::SunExposure: return "sun_exposure";
        case CategoryId::SvfValue: return "SVF_value";
        case CategoryId::RegionRanking: return "region_ranking";
        case CategoryId::RegionalSvfVariability: return "regional_svf_variability";
        case CategoryId::HeightAverage: return "height_average";
        case CategoryId::HighestRegion: return "highest_region";
        case CategoryId::TopLandUses: return "top_land_uses";
        case CategoryId::LandcoverType: return "landcover_type";
        case CategoryId::SkyVisibility: return "sky_visibility";
        case CategoryId::VisibilityRange: return "visibility_range";
        case CategoryId::SpatialOpenness: return "spatial_openness";
        case CategoryId::BuildingDensity: return "building_density";
    }
    throw ValidationError("unknown category id");
}

CategoryId category_id_from_string(const std::string& s) {
    for (const auto& c : all_categories())
        if (to_string(c.id) == s) return c.id;
    throw ValidationError("unknown category '" + s + "'");
}

// ---------------------------------------------------------------------------
// Deterministic randomness
// ---------------------------------------------------------------------------

uint64_t SplitRng::below(uint64_t n) {
    if (n == 0) throw ValidationError("SplitRng::below(0)");
    const uint64_t threshold = (~uint64_t{0} / n) * n;
    uint64_t x;
    do {
        x = next();
    } while (x >= threshold);
    return x % n;
}

uint64_t derive_seed(uint64_t base, uint64_t tag) {
    SplitRng rng(base ^ (tag * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull));
    return rng.next();
}

uint64_t derive_seed(uint64_t base, std::string_view tag) {
    // FNV-1a over the tag, folded into the base seed.
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return derive_seed(base, h);
}

void GenConfig::validate() const {
    if (per_category_count < 0) throw ValidationError("per_category_count must be >= 0");
    if (!(min_score_margin > 0)) throw ValidationError("min_score_margin must be positive");
    if (!(min_spatial_separation > 0))
        throw ValidationError("min_spatial_separation must be positive");
    if (!(region_size_min > 0) || region_size_max < region_size_min ||
        region_size_max > 100)
        throw ValidationError("region size range must satisfy 0 < min <= max <= 100");
    weights.validate();
}

// ---------------------------------------------------------------------------
// Formatting helpers
// ---------------------------------------------------------------------------

namespace {

constexpr int kSelectorAttempts = 60;    // full redraws of a selector set
constexpr int kPlacementAttempts = 120;  // single selector placements per redraw
constexpr int kMarginAttempts = 40;      // selector sets tried per item

std::string fmt_1dec(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

std::string fmt_int(double v) { return std::to_string(static_cast<long long>(std::llround(v))); }

std::string point_display(const PointPct& p) {
    return "Point (" + fmt_1dec(p.x) + "%, " + fmt_1dec(p.y) + "%)";
}

std::string point_canonical(const PointPct& p) {
    return "point (" + fmt_1dec(p.x) + "%, " + fmt_1dec(p.y) + "%)";
}

std::string region_bracket(const RegionPct& r) {
    return "[" + fmt_int(r.xmin) + "%, " + fmt_int(r.ymin) + "%, " + fmt_int(r.xmax) +
           "%, " + fmt_int(r.ymax) + "%]";
}

std::string region_paren(const RegionPct& r) {
    return "(" + fmt_int(r.xmin) + "%, " + fmt_int(r.ymin) + "%, " + fmt_int(r.xmax) +
           "%, " + fmt_int(r.ymax) + "%)";
}

char option_letter(int i) { return static_cast<char>('A' + i); }
char option_letter_lower(int i) { return static_cast<char>('a' + i); }

std::string fmt_weight_pct(double w) {
    const double pct = w * 100.0;
    if (std::fabs(pct - std::round(pct)) < 1e-9) return fmt_int(pct) + "%";
    return fmt_1dec(pct) + "%";
}

double round_half_up(double v, double unit) {
    return std::floor(v / unit + 0.5) * unit;
}

}  // namespace

// ---------------------------------------------------------------------------
// Selector sampling
// ---------------------------------------------------------------------------

namespace {

double center_x(const RegionPct& r) { return 0.5 * (r.xmin + r.xmax); }
double center_y(const RegionPct& r) { return 0.5 * (r.ymin + r.ymax); }

bool far_enough(double x, double y, const std::vector<double>& xs,
                const std::vector<double>& ys, double min_sep) {
    for (size_t i = 0; i < xs.size(); ++i)
        if (std::hypot(x - xs[i], y - ys[i]) < min_sep) return false;
    return true;
}

RegionPct sample_region(const GenConfig& cfg, SplitRng& rng) {
    const int smin = static_cast<int>(std::ceil(cfg.region_size_min));
    const int smax = static_cast<int>(std::floor(cfg.region_size_max));
    const int w = smin + static_cast<int>(rng.below(smax - smin + 1));
    // Keep the aspect ratio within [0.5, 2].
    const int hmin = std::max(smin, (w + 1) / 2);
    const int hmax = std::min(smax, 2 * w);
    const int h = hmin + static_cast<int>(rng.below(hmax - hmin + 1));
    const int x = static_cast<int>(rng.below(101 - w));
    const int y = static_cast<int>(rng.below(101 - h));
    return RegionPct{static_cast<double>(x), static_cast<double>(y),
                     static_cast<double>(x + w), static_cast<double>(y + h)};
}

PointPct sample_point(SplitRng& rng) {
    // 0.1-percent lattice so rendered coordinates are exact.
    return PointPct{static_cast<double>(rng.below(1001)) / 10.0,
                    static_cast<double>(rng.below(1001)) / 10.0};
}

}  // namespace

Selectors sample_selectors(int width, int height, const Category& cat,
                           const GenConfig& config, SplitRng& rng) {
    config.validate();
    if (width < 3 || height < 3)
        throw SuitabilityError("grid too small for selector sampling");

    int n_regions = 0, n_points = 0;
    switch (cat.format) {
        case AnswerFormat::NumericSvf:
        case AnswerFormat::NumericHeight:
        case AnswerFormat::MultiLabel:
            n_regions = 1;
            break;
        case AnswerFormat::Ranking:
        case AnswerFormat::RegionChoice:
            n_regions = cat.option_count;
            break;
        case AnswerFormat::PointChoice:
            n_points = cat.option_count;
            break;
    }

    for (int attempt = 0; attempt < kSelectorAttempts; ++attempt) {
        Selectors sel;
        std::vector<double> cx, cy;
        bool ok = true;
        for (int i = 0; i < n_regions && ok; ++i) {
            bool placed = false;
            for (int t = 0; t < kPlacementAttempts; ++t) {
                RegionPct r = sample_region(config, rng);
                if (i == 0 || far_enough(center_x(r), center_y(r), cx, cy,
                                         config.min_spatial_separation)) {
                    sel.regions.push_back(r);
                    cx.push_back(center_x(r));
                    cy.push_back(center_y(r));
                    placed = true;
                    break;
                }
            }
            ok = placed;
        }
        for (int i = 0; i < n_points && ok; ++i) {
            bool placed = false;
            for (int t = 0; t < kPlacementAttempts; ++t) {
                PointPct p = sample_point(rng);
                if (i == 0 || far_enough(p.x, p.y, cx, cy, config.min_spatial_separation)) {
                    sel.points.push_back(p);
                    cx.push_back(p.x);
                    cy.push_back(p.y);
                    placed = true;
                    break;
                }
            }
            ok = placed;
        }
        if (ok) return sel;
    }
    throw SuitabilityError("cannot satisfy spatial separation of " +
                           fmt_1dec(config.min_spatial_separation) + "% for category " +
                           to_string(cat.id));
}

// ---------------------------------------------------------------------------
// Metric evaluation per candidate
// ---------------------------------------------------------------------------

SkyVisibilityComponents sky_visibility_components(const SceneContext& scene,
                                                  const PointPct& point) {
    SkyVisibilityComponents c;
    PixelCoord px = point_to_pixel(point, scene.svf().width, scene.svf().height);
    c.svf = scene.svf().at(px.x, px.y);
    c.building_fraction = window_building_fraction(scene.seg(), point, kPenaltyWindowPixels);
    c.edge_pen = edge_penalty(scene.edges, scene.edge_p99, point, kPenaltyWindowPixels);
    return c;
}

double sky_visibility_from_components(const SkyVisibilityComponents& c,
                                      const MetricWeights& w) {
    return sky_visibility_score(c.svf, 0.3 * c.building_fraction, c.edge_pen, w);
}

namespace {

double point_metric(const SceneContext& scene, CategoryId id, const PointPct& p,
                    const MetricWeights& weights) {
    const Raster& svf = scene.svf();
    PixelCoord px = point_to_pixel(p, svf.width, svf.height);
    switch (id) {
        case CategoryId::SunExposure:
            return svf.at(px.x, px.y);
        case CategoryId::SkyVisibility:
            return sky_visibility_from_components(sky_visibility_components(scene, p),
                                                  weights);
        case CategoryId::VisibilityRange: {
            const double vs = viewshed_range(scene.dsm(), px, ViewshedParams{});
            RegionStats svf_w = window_stats(svf, p, kPenaltyWindowPixels);
            RegionStats h_w = window_stats(scene.dsm(), p, kPenaltyWindowPixels);
            return visibility_range_score(vs, svf_w.mean, terrain_roughness(h_w.stddev),
                                          weights);
        }
        default:
            throw ValidationError("not a point category");
    }
}

double region_metric(const SceneContext& scene, CategoryId id, const RegionPct& r,
                     const MetricWeights& weights, double scene_min_h,
                     double scene_max_h) {
    switch (id) {
        case CategoryId::RegionRanking:
            return region_stats(scene.svf(), r).mean;
        case CategoryId::RegionalSvfVariability:
            return region_stats(scene.svf(), r).stddev;
        case CategoryId::HighestRegion: {
            // Normalized so the shared score margin is meaningful in meters-free units.
            const double range = scene_max_h - scene_min_h;
            if (range <= 0) return 0.0;
            return (region_stats(scene.dsm(), r).max - scene_min_h) / range;
        }
        case CategoryId::SpatialOpenness:
            return spatial_openness_score(region_features(scene, r), weights);
        case CategoryId::BuildingDensity:
            return urban_density_score(region_features(scene, r), weights);
        default:
            throw ValidationError("not a region-choice category");
    }
}

int argmax(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

bool winner_has_margin(const std::vector<double>& scores, int w, double margin) {
    for (int i = 0; i < static_cast<int>(scores.size()); ++i)
        if (i != w && scores[w] - scores[i] < margin) return false;
    return true;
}

bool all_pairwise_margin(const std::vector<double>& scores, double margin) {
    for (size_t i = 0; i < scores.size(); ++i)
        for (size_t j = i + 1; j < scores.size(); ++j)
            if (std::fabs(scores[i] - scores[j]) < margin) return false;
    return true;
}

// Per-class coverage over a region of the segmentation raster.
std::vector<double> class_coverage(const SegRaster& seg, const RegionPct& region) {
    PixelRect rect = region_to_pixels(region, seg.width, seg.height);
    std::vector<long long> counts(landcover_vocabulary().size(), 0);
    for (int y = rect.y0; y < rect.y1; ++y)
        for (int x = rect.x0; x < rect.x1; ++x) ++counts[seg.at(x, y)];
    std::vector<double> cov(counts.size());
    for (size_t i = 0; i < counts.size(); ++i)
        cov[i] = static_cast<double>(counts[i]) / static_cast<double>(rect.pixel_count());
    return cov;
}

std::string join_labels(const std::vector<int>& ids) {
    std::string out;
    for (int id : ids) {
        if (!out.empty()) out += ", ";
        out += landcover_vocabulary()[id];
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Item generation
// ---------------------------------------------------------------------------

namespace {
void rebuild_options(QAItem& item, const MetricWeights& weights);
}

QAItem gen_item(const SceneContext& scene, const Category& cat, const GenConfig& config,
                SplitRng& rng) {
    config.validate();
    const int w = scene.dsm().width;
    const int h = scene.dsm().height;

    QAItem item;
    item.scene_id = scene.bundle.scene_id;
    item.category = cat.id;
    item.tier = cat.tier;

    switch (cat.format) {
        case AnswerFormat::NumericSvf: {
            Selectors sel = sample_selectors(w, h, cat, config, rng);
            const double mean = region_stats(scene.svf(), sel.regions[0]).mean;
            item.regions = sel.regions;
            item.ground_truth = fmt_1dec(round_half_up(mean, 0.1));
            item.option_scores = {mean};
            break;
        }
        case AnswerFormat::NumericHeight: {
            Selectors sel = sample_selectors(w, h, cat, config, rng);
            const double mean = region_stats(scene.dsm(), sel.regions[0]).mean;
            item.regions = sel.regions;
            item.ground_truth = fmt_int(round_half_up(mean, 10.0)) + " m";
            item.option_scores = {mean};
            break;
        }
        case AnswerFormat::MultiLabel: {
            for (int attempt = 0;; ++attempt) {
                if (attempt >= kMarginAttempts)
                    throw SuitabilityError("no usable region for " + to_string(cat.id) +
                                           " in scene " + scene.bundle.scene_id);
                Selectors sel = sample_selectors(w, h, cat, config, rng);
                std::vector<double> cov = class_coverage(scene.seg(), sel.regions[0]);
                std::vector<int> chosen;
                if (cat.id == CategoryId::LandcoverType) {
                    int present = 0;
                    for (double c : cov)
                        if (c > 0) ++present;
                    if (present < 2) continue;  // needs at least two classes
                    for (size_t i = 0; i < cov.size(); ++i)
                        if (cov[i] >= 0.05) chosen.push_back(static_cast<int>(i));
                } else {  // top_land_uses: dominant classes, strongest first
                    std::vector<int> order(cov.size());
                    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
                    std::stable_sort(order.begin(), order.end(),
                                     [&](int a, int b) { return cov[a] > cov[b]; });
                    for (int id : order) {
                        if (cov[id] >= 0.2 && chosen.size() < 3) chosen.push_back(id);
                    }
                    if (chosen.empty()) chosen.push_back(order[0]);
                }
                if (chosen.empty()) continue;
                item.regions = sel.regions;
                item.ground_truth = join_labels(chosen);
                item.option_scores.clear();
                for (int id : chosen) item.option_scores.push_back(cov[id]);
                break;
            }
            break;
        }
        case AnswerFormat::Ranking: {
            for (int attempt = 0;; ++attempt) {
                if (attempt >= kMarginAttempts)
                    throw SuitabilityError("svf means too close for region_ranking in scene " +
                                           scene.bundle.scene_id);
                Selectors sel = sample_selectors(w, h, cat, config, rng);
                std::vector<double> scores;
                for (const auto& r : sel.regions)
                    scores.push_back(region_stats(scene.svf(), r).mean);
                if (!all_pairwise_margin(scores, config.min_score_margin)) continue;
                item.regions = sel.regions;
                item.option_scores = scores;
                std::vector<int> order = {0, 1, 2};
                std::sort(order.begin(), order.end(),
                          [&](int a, int b) { return scores[a] > scores[b]; });
                std::string gt;
                for (int idx : order) {
                    if (!gt.empty()) gt += ", ";
                    gt += std::string("region ") + option_letter_lower(idx);
                }
                item.ground_truth = gt;
                break;
            }
            break;
        }
        case AnswerFormat::RegionChoice: {
            RegionStats full = rect_stats(scene.dsm(), PixelRect{0, 0, w, h});
            for (int attempt = 0;; ++attempt) {
                if (attempt >= kMarginAttempts)
                    throw SuitabilityError("score margin unsatisfiable for " +
                                           to_string(cat.id) + " in scene " +
                                           scene.bundle.scene_id);
                Selectors sel = sample_selectors(w, h, cat, config, rng);
                std::vector<double> scores;
                for (const auto& r : sel.regions)
                    scores.push_back(region_metric(scene, cat.id, r, config.weights,
                                                   full.min, full.max));
                const int win = argmax(scores);
                if (!winner_has_margin(scores, win, config.min_score_margin)) continue;
                item.regions = sel.regions;
                item.option_scores = scores;
                item.ground_truth = std::string("region ") + option_letter_lower(win);
                break;
            }
            break;
        }
        case AnswerFormat::PointChoice: {
            for (int attempt = 0;; ++attempt) {
                if (attempt >= kMarginAttempts)
                    throw SuitabilityError("score margin unsatisfiable for " +
                                           to_string(cat.id) + " in scene " +
                                           scene.bundle.scene_id);
                Selectors sel = sample_selectors(w, h, cat, config, rng);
                std::vector<double> scores;
                for (const auto& p : sel.points)
                    scores.push_back(point_metric(scene, cat.id, p, config.weights));
                const int win = argmax(scores);
                if (!winner_has_margin(scores, win, config.min_score_margin)) continue;
                item.points = sel.points;
                item.option_scores = scores;
                item.ground_truth = point_canonical(sel.points[win]);
                break;
            }
            break;
        }
    }

    rebuild_options(item, config.weights);
    return item;
}

std::vector<double> recompute_option_scores(const SceneContext& scene, const QAItem& item,
                                            const MetricWeights& weights) {
    const Category& cat = category(item.category);
    std::vector<double> scores;
    switch (cat.format) {
        case AnswerFormat::PointChoice:
            for (const auto& p : item.points)
                scores.push_back(point_metric(scene, item.category, p, weights));
            break;
        case AnswerFormat::RegionChoice:
        case AnswerFormat::Ranking: {
            const int w = scene.dsm().width, h = scene.dsm().height;
            RegionStats full = rect_stats(scene.dsm(), PixelRect{0, 0, w, h});
            for (const auto& r : item.regions) {
                if (cat.format == AnswerFormat::Ranking)
                    scores.push_back(region_stats(scene.svf(), r).mean);
                else
                    scores.push_back(
                        region_metric(scene, item.category, r, weights, full.min, full.max));
            }
            break;
        }
        case AnswerFormat::NumericSvf:
            scores.push_back(region_stats(scene.svf(), item.regions.at(0)).mean);
            break;
        case AnswerFormat::NumericHeight:
            scores.push_back(region_stats(scene.dsm(), item.regions.at(0)).mean);
            break;
        case AnswerFormat::MultiLabel:
            break;  // coverage-based; no single score vector
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

namespace {

void rebuild_options(QAItem& item, const MetricWeights& weights) {
    const Category& cat = category(item.category);
    item.options.clear();
    switch (cat.format) {
        case AnswerFormat::RegionChoice:
        case AnswerFormat::Ranking:
            for (size_t i = 0; i < item.regions.size(); ++i)
                item.options.push_back(std::string("Region ") + option_letter(static_cast<int>(i)));
            break;
        case AnswerFormat::PointChoice:
            for (const auto& p : item.points) item.options.push_back(point_display(p));
            break;
        default:
            break;
    }
    item.prompt = render_prompt(item, weights);
}

std::string scoring_method_line(CategoryId id, const MetricWeights& w) {
    switch (id) {
        case CategoryId::SkyVisibility:
            return "Scoring method: Locations were scored by sky view factor (" +
                   fmt_weight_pct(w.sky_visibility.svf) + ") minus a building penalty (" +
                   fmt_weight_pct(w.sky_visibility.building_penalty) +
                   ") and an edge penalty (" + fmt_weight_pct(w.sky_visibility.edge_penalty) +
                   ").";
        case CategoryId::VisibilityRange:
            return "Scoring method: Locations were scored solely based on viewshed distance "
                   "analysis (" +
                   fmt_weight_pct(w.visibility_range.viewshed) +
                   "), local sky view factor context (" +
                   fmt_weight_pct(w.visibility_range.svf_context) +
                   "), and terrain roughness (" + fmt_weight_pct(w.visibility_range.terrain) +
                   ").";
        case CategoryId::SpatialOpenness:
            return "Scoring method: Regions were scored by an openness index (" +
                   fmt_weight_pct(w.openness.openness_index) + "), mean sky view factor (" +
                   fmt_weight_pct(w.openness.mean_svf) + "), low building density (" +
                   fmt_weight_pct(w.openness.low_building) + "), terrain flatness (" +
                   fmt_weight_pct(w.openness.terrain_flatness) + "), and visual simplicity (" +
                   fmt_weight_pct(w.openness.visual_simplicity) + ").";
        case CategoryId::BuildingDensity:
            return "Scoring method: Regions were scored by building coverage ratio (" +
                   fmt_weight_pct(w.density.bcr) + "), floor area ratio (" +
                   fmt_weight_pct(w.density.far) + "), sky view factor complement (" +
                   fmt_weight_pct(w.density.svf_comp) + "), edge density (" +
                   fmt_weight_pct(w.density.edge_density) + "), and darkness (" +
                   fmt_weight_pct(w.density.darkness) + ").";
        default:
            return {};
    }
}

const char* kCoordParagraphPoints =
    "Coordinate system: Each point is specified by (x, y) coordinates as percentages of "
    "the image dimensions, where (0, 0) represents the top-left corner. 'x' represents "
    "the horizontal position (from left to right), and 'y' represents the vertical "
    "position (from top to bottom).";

const char* kCoordParagraphRegions =
    "Coordinate system: Each region is specified by [xmin%, ymin%, xmax%, ymax%] as "
    "percentages of the image dimensions, where (0, 0) represents the top-left corner. "
    "'x' represents the horizontal position (from left to right), and 'y' represents "
    "the vertical position (from top to bottom).";

const char* kSystemLine = "System: You are a precise geospatial assistant. Answer concisely.";

std::string numeric_prompt(const QAItem& item, const std::string& question,
                           const std::string& format_line) {
    std::string p = kSystemLine;
    p += "\nUser: Consider an RGB image. Answer using the specified format only.";
    p += "\nQuestion: " + question + " " + region_bracket(item.regions[0]) + ".";
    p += "\nNote: Coordinates are the percentages of the image size "
         "[xmin%, ymin%, xmax%, ymax%]. (0,0) is top-left.";
    p += "\nAnswer format: " + format_line;
    return p;
}

std::string point_choice_prompt(const QAItem& item, const MetricWeights& weights,
                                const std::string& question, const std::string& hint,
                                bool tier2) {
    std::string p = kSystemLine;
    p += "\nUser: " + question;
    if (!hint.empty()) p += "\nHint: " + hint;
    if (tier2) {
        p += "\n" + scoring_method_line(item.category, weights);
        p += "\n";
        p += kCoordParagraphPoints;
    }
    p += "\nPlease choose from:";
    for (const auto& pt : item.points) p += "\n" + point_display(pt);
    p += "\nAnswer format: Point (x.x%, y.y%)";
    return p;
}

std::string region_choice_prompt(const QAItem& item, const MetricWeights& weights,
                                 const std::string& question, bool tier2) {
    std::string p = kSystemLine;
    p += "\nUser: " + question + " Choose one.";
    if (tier2) {
        p += "\n" + scoring_method_line(item.category, weights);
        p += "\n";
        p += kCoordParagraphRegions;
    }
    p += "\n";
    for (size_t i = 0; i < item.regions.size(); ++i) {
        p += "\n" + std::string(1, option_letter(static_cast<int>(i))) + ": " +
             region_bracket(item.regions[i]);
    }
    p += "\n\nPlease choose from:";
    for (size_t i = 0; i < item.regions.size(); ++i)
        p += "\nRegion " + std::string(1, option_letter(static_cast<int>(i)));
    p += "\nAnswer format:\nRegion X";
    return p;
}

std::string multilabel_prompt(const QAItem& item, const std::string& question) {
    std::string p = kSystemLine;
    p += "\nUser: " + question + " " + region_paren(item.regions[0]) + "?";
    p += "\nChoices: ";
    const auto& vocab = landcover_vocabulary();
    for (size_t i = 0; i < vocab.size(); ++i) {
        if (i) p += ", ";
        p += vocab[i];
    }
    p += "\nAnswer format:\nComma-separated labels in lowercase.";
    return p;
}

}  // namespace

std::string render_prompt(const QAItem& item, const MetricWeights& weights) {
    switch (item.category) {
        case CategoryId::SvfValue:
            return numeric_prompt(item, "Calculate the mean Sky View Factor within the area",
                                  "X.X (a single number in [0.0, 1.0], rounded to 1 decimal)");
        case CategoryId::HeightAverage:
            return numeric_prompt(item, "Calculate the mean elevation within the area",
                                  "X m (meters, rounded to 10-meter increments)");
        case CategoryId::SunExposure:
            return point_choice_prompt(item, weights,
                                       "Which location has the highest solar exposure potential?",
                                       "", false);
        case CategoryId::SkyVisibility:
            return point_choice_prompt(item, weights,
                                       "Which location has the highest sky visibility?",
                                       "Areas with fewer obstacles have a higher sky view factor.",
                                       true);
        case CategoryId::VisibilityRange:
            return point_choice_prompt(
                item, weights, "Which location has the most comprehensive sight lines?",
                "Areas with good visibility typically have a high sky view factor and fewer "
                "obstacles in the line of sight.",
                true);
        case CategoryId::RegionRanking: {
            std::string p = kSystemLine;
            p += "\nUser: Compare the SVF values of the three regions. Reply with the order "
                 "from highest to lowest, labeled A/B/C.";
            p += "\nRegions (x1%, y1%, x2%, y2%):";
            for (size_t i = 0; i < item.regions.size(); ++i)
                p += "\n  " + std::string(1, option_letter(static_cast<int>(i))) + ": " +
                     region_paren(item.regions[i]);
            p += "\nAnswer format:\n\"Region A, Region B, Region C\"";
            return p;
        }
        case CategoryId::RegionalSvfVariability:
            return region_choice_prompt(
                item, weights, "Which region shows the highest variability in sky view factor?",
                false);
        case CategoryId::HighestRegion:
            return region_choice_prompt(item, weights, "Which region has the highest elevation?",
                                        false);
        case CategoryId::SpatialOpenness:
            return region_choice_prompt(
                item, weights,
                "Which area demonstrates maximum openness with minimal obstruction?", true);
        case CategoryId::BuildingDensity:
            return region_choice_prompt(item, weights,
                                        "Which area has the most crowded urban layouts?", true);
        case CategoryId::TopLandUses:
            return multilabel_prompt(item,
                                     "Which land use types are most frequent in the region");
        case CategoryId::LandcoverType:
            return multilabel_prompt(item,
                                     "Which land cover types are present in the region");
    }
    throw ValidationError("unknown category in render_prompt");
}

// ---------------------------------------------------------------------------
// Balanced shuffling
// ---------------------------------------------------------------------------

void balanced_shuffle(std::vector<QAItem>& items, uint64_t seed,
                      const MetricWeights& weights) {
    for (const auto& cat : all_categories()) {
        if (cat.format != AnswerFormat::RegionChoice &&
            cat.format != AnswerFormat::PointChoice && cat.format != AnswerFormat::Ranking)
            continue;

        std::vector<size_t> idxs;
        for (size_t i = 0; i < items.size(); ++i)
            if (items[i].category == cat.id) idxs.push_back(i);
        if (idxs.empty()) continue;

        const int k = cat.option_count;
        SplitRng rng(derive_seed(seed, "balance." + to_string(cat.id)));
        std::vector<int> block(k);

        for (size_t j = 0; j < idxs.size(); ++j) {
            if (j % k == 0) {
                // Fresh random permutation every k items keeps each position's
                // count within one of uniform.
                for (int i = 0; i < k; ++i) block[i] = i;
                for (int i = k - 1; i > 0; --i)
                    std::swap(block[i], block[rng.below(static_cast<uint64_t>(i) + 1)]);
            }
            const int target = block[j % k];
            QAItem& item = items[idxs[j]];
            const int win = argmax(item.option_scores);

            std::vector<int> rest;
            for (int i = 0; i < k; ++i)
                if (i != win) rest.push_back(i);
            for (int i = static_cast<int>(rest.size()) - 1; i > 0; --i)
                std::swap(rest[i], rest[rng.below(static_cast<uint64_t>(i) + 1)]);

            std::vector<int> order(k);  // order[new_pos] = old index
            int r = 0;
            for (int pos = 0; pos < k; ++pos) order[pos] = (pos == target) ? win : rest[r++];

            std::vector<double> new_scores(k);
            for (int pos = 0; pos < k; ++pos) new_scores[pos] = item.option_scores[order[pos]];
            item.option_scores = std::move(new_scores);
            if (!item.regions.empty()) {
                std::vector<RegionPct> nr(k);
                for (int pos = 0; pos < k; ++pos) nr[pos] = item.regions[order[pos]];
                item.regions = std::move(nr);
            }
            if (!item.points.empty()) {
                std::vector<PointPct> np(k);
                for (int pos = 0; pos < k; ++pos) np[pos] = item.points[order[pos]];
                item.points = std::move(np);
            }

            switch (cat.format) {
                case AnswerFormat::RegionChoice:
                    item.ground_truth = std::string("region ") + option_letter_lower(target);
                    break;
                case AnswerFormat::PointChoice:
                    item.ground_truth = point_canonical(item.points[target]);
                    break;
                case AnswerFormat::Ranking: {
                    std::vector<int> ord(k);
                    for (int i = 0; i < k; ++i) ord[i] = i;
                    std::sort(ord.begin(), ord.end(), [&](int a, int b) {
                        return item.option_scores[a] > item.option_scores[b];
                    });
                    std::string gt;
                    for (int idx : ord) {
                        if (!gt.empty()) gt += ", ";
                        gt += std::string("region ") + option_letter_lower(idx);
                    }
                    item.ground_truth = gt;
                    break;
                }
                default:
                    break;
            }
            rebuild_options(item, weights);
        }
    }
}

// ---------------------------------------------------------------------------
// JSONL emission and loading
// ---------------------------------------------------------------------------

namespace {

ordered_json item_to_json(const QAItem& item) {
    ordered_json j;
    j["item_id"] = item.item_id;
    j["scene_id"] = item.scene_id;
    j["category"] = to_string(item.category);
    j["tier"] = item.tier;
    j["prompt"] = item.prompt;
    j["options"] = item.options;
    j["ground_truth"] = item.ground_truth;
    ordered_json regions = ordered_json::array();
    for (const auto& r : item.regions)
        regions.push_back({static_cast<long long>(r.xmin), static_cast<long long>(r.ymin),
                           static_cast<long long>(r.xmax), static_cast<long long>(r.ymax)});
    ordered_json points = ordered_json::array();
    for (const auto& p : item.points) points.push_back({p.x, p.y});
    j["selectors"] = {{"regions", regions}, {"points", points}};
    j["gen_seed"] = item.gen_seed;
    j["metadata"] = {{"option_scores", item.option_scores}};
    return j;
}

QAItem item_from_json(const ordered_json& j) {
    QAItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.scene_id = j.at("scene_id").get<std::string>();
    item.category = category_id_from_string(j.at("category").get<std::string>());
    item.tier = j.at("tier").get<int>();
    item.prompt = j.at("prompt").get<std::string>();
    item.options = j.at("options").get<std::vector<std::string>>();
    item.ground_truth = j.at("ground_truth").get<std::string>();
    for (const auto& r : j.at("selectors").at("regions"))
        item.regions.push_back(RegionPct{r.at(0).get<double>(), r.at(1).get<double>(),
                                         r.at(2).get<double>(), r.at(3).get<double>()});
    for (const auto& p : j.at("selectors").at("points"))
        item.points.push_back(PointPct{p.at(0).get<double>(), p.at(1).get<double>()});
    item.gen_seed = j.at("gen_seed").get<uint64_t>();
    item.option_scores = j.at("metadata").at("option_scores").get<std::vector<double>>();
    return item;
}

}  // namespace

void emit_jsonl(const std::vector<QAItem>& items, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open items file for writing: " + path);
    for (const auto& item : items) out << item_to_json(item).dump() << "\n";
    if (!out) throw IoError("write failed: " + path);
}

std::vector<QAItem> load_items_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open items file: " + path);
    std::vector<QAItem> items;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            items.push_back(item_from_json(ordered_json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return items;
}

// ---------------------------------------------------------------------------
// Balance auditing
// ---------------------------------------------------------------------------

double chi_square_p_value(double chi2, int dof) {
    if (dof <= 0 || chi2 < 0) return 1.0;
    // Regularized upper incomplete gamma Q(dof/2, chi2/2).
    const double a = dof / 2.0;
    const double x = chi2 / 2.0;
    if (x == 0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {  // series for P, then 1 - P
        double ap = a, sum = 1.0 / a, del = sum;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-14) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Lentz continued fraction for Q.
    double b = x + 1.0 - a, c = 1.0 / 1e-300, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-14) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

BalanceReport audit_balance(const std::vector<QAItem>& items) {
    BalanceReport report;
    for (const auto& cat : all_categories()) {
        if (cat.option_count < 2) continue;
        BalanceReport::PerCategory pc;
        pc.category = to_string(cat.id);
        pc.position_counts.assign(cat.option_count, 0);
        for (const auto& item : items) {
            if (item.category != cat.id || item.option_scores.empty()) continue;
            ++pc.position_counts[argmax(item.option_scores)];
            ++pc.total;
        }
        if (pc.total == 0) continue;
        const double expected = static_cast<double>(pc.total) / cat.option_count;
        for (long long c : pc.position_counts) {
            const double d = c - expected;
            pc.chi_square += d * d / expected;
        }
        pc.p_value = chi_square_p_value(pc.chi_square, cat.option_count - 1);
        report.categories.push_back(std::move(pc));
    }
    return report;
}

std::string balance_report_json(const BalanceReport& report) {
    ordered_json j;
    ordered_json cats = ordered_json::array();
    for (const auto& pc : report.categories) {
        cats.push_back({{"category", pc.category},
                        {"position_counts", pc.position_counts},
                        {"total", pc.total},
                        {"chi_square", pc.chi_square},
                        {"p_value", pc.p_value}});
    }
    j["categories"] = cats;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Batch generation
// ---------------------------------------------------------------------------

GenBatchResult gen_batch(const std::vector<SceneContext>& scenes, const GenConfig& config) {
    config.validate();
    if (scenes.empty()) throw ValidationError("gen_batch requires at least one scene");

    std::vector<CategoryId> cats = config.categories;
    if (cats.empty())
        for (const auto& c : all_categories()) cats.push_back(c.id);

    GenBatchResult result;
    for (CategoryId id : cats) {
        const Category& cat = category(id);
        const std::string name = to_string(id);
        const uint64_t cat_seed = derive_seed(config.seed, name);
        int made = 0;
        for (int slot = 0; slot < config.per_category_count; ++slot) {
            bool ok = false;
            for (size_t a = 0; a < scenes.size() && !ok; ++a) {
                const size_t si = (static_cast<size_t>(slot) + a) % scenes.size();
                const uint64_t item_seed =
                    derive_seed(cat_seed, static_cast<uint64_t>(slot) * 1000003ull + si);
                SplitRng rng(item_seed);
                try {
                    QAItem item = gen_item(scenes[si], cat, config, rng);
                    item.gen_seed = item_seed;
                    char idbuf[16];
                    std::snprintf(idbuf, sizeof(idbuf), "%05d", slot);
                    item.item_id = item.scene_id + "-" + name + "-" + idbuf;
                    result.items.push_back(std::move(item));
                    ok = true;
                } catch (const SuitabilityError&) {
                    // try the next scene
                }
            }
            if (ok) ++made;
        }
        result.per_category_counts[name] = made;
        if (made < config.per_category_count)
            result.warnings.push_back("category " + name + ": generated " +
                                      std::to_string(made) + " of " +
                                      std::to_string(config.per_category_count) +
                                      " (remaining scene/category pairs unsuitable)");
    }

    balanced_shuffle(result.items, derive_seed(config.seed, "balanced-shuffle"),
                     config.weights);
    return result;
}

// ---------------------------------------------------------------------------
// Weight sensitivity study
// ---------------------------------------------------------------------------

SensitivityReport run_sensitivity(const std::vector<SceneContext>& scenes,
                                  const GenConfig& config, int n_questions) {
    GenConfig c = config;
    c.categories = {CategoryId::SkyVisibility};
    c.per_category_count = n_questions;
    GenBatchResult batch = gen_batch(scenes, c);

    std::map<std::string, const SceneContext*> by_id;
    for (const auto& s : scenes) by_id[s.bundle.scene_id] = &s;

    // Component vectors per item, in option order.
    std::vector<std::vector<SkyVisibilityComponents>> comps;
    comps.reserve(batch.items.size());
    for (const auto& item : batch.items) {
        std::vector<SkyVisibilityComponents> cs;
        for (const auto& p : item.points)
            cs.push_back(sky_visibility_components(*by_id.at(item.scene_id), p));
        comps.push_back(std::move(cs));
    }

    auto winner_under = [&](size_t i, const MetricWeights& w) {
        int best = 0;
        double best_score = -1e300;
        for (size_t o = 0; o < comps[i].size(); ++o) {
            const double s = sky_visibility_from_components(comps[i][o], w);
            if (s > best_score) {
                best_score = s;
                best = static_cast<int>(o);
            }
        }
        return best;
    };

    std::vector<int> base_winner(batch.items.size());
    for (size_t i = 0; i < batch.items.size(); ++i)
        base_winner[i] = winner_under(i, config.weights);

    struct Coeff {
        const char* name;
        double MetricWeights::SkyVisibility::*field;
    };
    static const Coeff kCoeffs[] = {
        {"svf", &MetricWeights::SkyVisibility::svf},
        {"building_penalty", &MetricWeights::SkyVisibility::building_penalty},
        {"edge_penalty", &MetricWeights::SkyVisibility::edge_penalty},
        {"window_norm", &MetricWeights::SkyVisibility::window_norm},
    };

    SensitivityReport report;
    report.n_questions = static_cast<int>(batch.items.size());

    auto add_entry = [&](const std::string& name, double delta, const MetricWeights& w) {
        SensitivityReport::Entry e;
        e.coefficient = name;
        e.delta = delta;
        for (size_t i = 0; i < batch.items.size(); ++i)
            if (winner_under(i, w) != base_winner[i]) ++e.changed;
        e.change_rate = batch.items.empty()
                            ? 0.0
                            : static_cast<double>(e.changed) / batch.items.size();
        report.entries.push_back(e);
    };

    add_entry("control", 0.0, config.weights);
    for (const auto& cf : kCoeffs) {
        for (double delta : {+0.1, -0.1}) {
            MetricWeights w = config.weights;
            w.sky_visibility.*cf.field += delta;
            add_entry(cf.name, delta, w);
        }
    }
    return report;
}

std::string sensitivity_report_json(const SensitivityReport& report) {
    ordered_json j;
    j["n_questions"] = report.n_questions;
    ordered_json entries = ordered_json::array();
    for (const auto& e : report.entries)
        entries.push_back({{"coefficient", e.coefficient},
                           {"delta", e.delta},
                           {"changed", e.changed},
                           {"change_rate", e.change_rate}});
    j["entries"] = entries;
    return j.dump(2) + "\n";
}

}  // namespace skybench
