#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "skybench/qa.hpp"
#include "support/scenes.hpp"

using namespace skybench;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int argmax_of(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// flat, all-grass scene: every candidate ties on every svf-derived metric
SceneContext boring_scene() {
    SceneBundle b;
    b.scene_id = "boring";
    b.dsm = scenes::flat_dsm(48);
    b.seg = SegRaster(48, 48, scenes::kGrassland);
    return prepare_scene(std::move(b));
}

}  // namespace

TEST_CASE("selector sampling honors separation, sizes and determinism") {
    GenConfig cfg;
    const Category& cat = category(CategoryId::SunExposure);  // 4 points
    SplitRng rng_a(42), rng_b(42);
    Selectors a = sample_selectors(1000, 1000, cat, cfg, rng_a);
    Selectors b = sample_selectors(1000, 1000, cat, cfg, rng_b);
    REQUIRE(a.points.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(a.points[i].x == b.points[i].x);  // same seed, same selectors
        CHECK(a.points[i].y == b.points[i].y);
        for (size_t j = i + 1; j < 4; ++j)
            CHECK(std::hypot(a.points[i].x - a.points[j].x, a.points[i].y - a.points[j].y) >=
                  cfg.min_spatial_separation);
    }

    const Category& reg_cat = category(CategoryId::SpatialOpenness);  // 4 regions
    SplitRng rng_c(7);
    Selectors r = sample_selectors(500, 500, reg_cat, cfg, rng_c);
    REQUIRE(r.regions.size() == 4);
    for (const auto& reg : r.regions) {
        const double w = reg.xmax - reg.xmin;
        const double h = reg.ymax - reg.ymin;
        CHECK(w >= cfg.region_size_min);
        CHECK(w <= cfg.region_size_max);
        CHECK(h >= cfg.region_size_min);
        CHECK(h <= cfg.region_size_max);
        const double aspect = w / h;
        CHECK(aspect >= 0.5 - 1e-9);
        CHECK(aspect <= 2.0 + 1e-9);
        CHECK(reg.xmin == std::floor(reg.xmin));  // integer percent lattice
        CHECK(reg.ymax == std::floor(reg.ymax));
    }

    // infeasible packing: four points pairwise 150% apart cannot exist in a
    // 100x100 percent square (diagonal is ~141), so bounded retries give up
    GenConfig tight = cfg;
    tight.min_spatial_separation = 150;
    SplitRng rng_d(1);
    CHECK_THROWS_AS(sample_selectors(1000, 1000, cat, tight, rng_d), SuitabilityError);
}

TEST_CASE("flat scenes are unsuitable for spread-dependent categories") {
    SceneContext scene = boring_scene();
    GenConfig cfg;
    SplitRng rng(5);
    CHECK_THROWS_AS(gen_item(scene, category(CategoryId::SkyVisibility), cfg, rng),
                    SuitabilityError);
    SplitRng rng2(6);
    CHECK_THROWS_AS(gen_item(scene, category(CategoryId::RegionRanking), cfg, rng2),
                    SuitabilityError);
    // landcover_type needs two classes
    SplitRng rng3(7);
    CHECK_THROWS_AS(gen_item(scene, category(CategoryId::LandcoverType), cfg, rng3),
                    SuitabilityError);
}

TEST_CASE("numeric ground truths quantize as documented") {
    SceneBundle b;
    b.scene_id = "const27";
    b.dsm = scenes::flat_dsm(32, 27.0);
    b.seg = SegRaster(32, 32, scenes::kGrassland);
    SceneContext scene = prepare_scene(std::move(b));

    GenConfig cfg;
    SplitRng rng(11);
    QAItem h = gen_item(scene, category(CategoryId::HeightAverage), cfg, rng);
    CHECK(h.ground_truth == "30 m");  // 27 rounds up to the nearest 10 m bin

    SplitRng rng2(12);
    QAItem s = gen_item(scene, category(CategoryId::SvfValue), cfg, rng2);
    CHECK(s.ground_truth == "1.0");  // flat terrain, full sky
}

TEST_CASE("choice items satisfy the winner margin and self-consistency") {
    auto set = scenes::benchmark_scene_set(2, 31, 48);
    GenConfig cfg;
    cfg.per_category_count = 3;
    cfg.categories = {CategoryId::SkyVisibility, CategoryId::SpatialOpenness,
                      CategoryId::HighestRegion, CategoryId::SunExposure,
                      CategoryId::RegionRanking, CategoryId::RegionalSvfVariability,
                      CategoryId::VisibilityRange, CategoryId::BuildingDensity};
    GenBatchResult batch = gen_batch(set, cfg);
    CHECK(!batch.items.empty());

    std::map<std::string, const SceneContext*> by_id;
    for (const auto& s : set) by_id[s.bundle.scene_id] = &s;

    for (const auto& item : batch.items) {
        const Category& cat = category(item.category);
        auto scores = recompute_option_scores(*by_id.at(item.scene_id), item, cfg.weights);
        REQUIRE(scores.size() == item.option_scores.size());
        for (size_t i = 0; i < scores.size(); ++i)
            CHECK(scores[i] == doctest::Approx(item.option_scores[i]).epsilon(1e-12));

        const int win = argmax_of(scores);
        if (cat.format == AnswerFormat::RegionChoice) {
            CHECK(item.ground_truth == std::string("region ") + static_cast<char>('a' + win));
        } else if (cat.format == AnswerFormat::PointChoice) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "point (%.1f%%, %.1f%%)", item.points[win].x,
                          item.points[win].y);
            CHECK(item.ground_truth == buf);
        } else if (cat.format == AnswerFormat::Ranking) {
            std::vector<int> order{0, 1, 2};
            std::sort(order.begin(), order.end(),
                      [&](int a, int b) { return scores[a] > scores[b]; });
            std::string gt;
            for (int idx : order) {
                if (!gt.empty()) gt += ", ";
                gt += std::string("region ") + static_cast<char>('a' + idx);
            }
            CHECK(item.ground_truth == gt);
        }
        // winner margin against every distractor
        if (cat.format == AnswerFormat::RegionChoice ||
            cat.format == AnswerFormat::PointChoice) {
            for (size_t i = 0; i < scores.size(); ++i)
                if (static_cast<int>(i) != win)
                    CHECK(scores[win] - scores[i] >= cfg.min_score_margin - 1e-12);
        }
        // options never spatially closer than the separation floor
        const auto dist_ok = [&](double x1, double y1, double x2, double y2) {
            return std::hypot(x1 - x2, y1 - y2) >= cfg.min_spatial_separation - 1e-9;
        };
        for (size_t i = 0; i < item.points.size(); ++i)
            for (size_t j = i + 1; j < item.points.size(); ++j)
                CHECK(dist_ok(item.points[i].x, item.points[i].y, item.points[j].x,
                              item.points[j].y));
        for (size_t i = 0; i < item.regions.size(); ++i)
            for (size_t j = i + 1; j < item.regions.size(); ++j)
                CHECK(dist_ok(0.5 * (item.regions[i].xmin + item.regions[i].xmax),
                              0.5 * (item.regions[i].ymin + item.regions[i].ymax),
                              0.5 * (item.regions[j].xmin + item.regions[j].xmax),
                              0.5 * (item.regions[j].ymin + item.regions[j].ymax)));
    }
}

TEST_CASE("balanced shuffle hits every position equally") {
    // synthetic batch: 400 four-option point items
    std::vector<QAItem> items;
    SplitRng rng(1234);
    for (int i = 0; i < 400; ++i) {
        QAItem it;
        it.item_id = "it-" + std::to_string(i);
        it.scene_id = "s";
        it.category = CategoryId::SunExposure;
        it.tier = 1;
        for (int k = 0; k < 4; ++k) {
            it.points.push_back({std::floor(rng.unit() * 1000) / 10.0,
                                 std::floor(rng.unit() * 1000) / 10.0});
            it.option_scores.push_back(0.1 + 0.2 * k + 0.05 * rng.unit());
        }
        char buf[64];
        const int win = argmax_of(it.option_scores);
        std::snprintf(buf, sizeof(buf), "point (%.1f%%, %.1f%%)", it.points[win].x,
                      it.points[win].y);
        it.ground_truth = buf;
        items.push_back(std::move(it));
    }

    auto copy = items;
    balanced_shuffle(items, 99);
    balanced_shuffle(copy, 99);

    int counts[4] = {0, 0, 0, 0};
    for (size_t i = 0; i < items.size(); ++i) {
        const QAItem& it = items[i];
        const int win = argmax_of(it.option_scores);
        ++counts[win];
        // ground truth follows the winner through the permutation
        char buf[64];
        std::snprintf(buf, sizeof(buf), "point (%.1f%%, %.1f%%)", it.points[win].x,
                      it.points[win].y);
        CHECK(it.ground_truth == buf);
        // deterministic under seed
        CHECK(copy[i].ground_truth == it.ground_truth);
        CHECK(copy[i].option_scores == it.option_scores);
    }
    CHECK(counts[0] == 100);
    CHECK(counts[1] == 100);
    CHECK(counts[2] == 100);
    CHECK(counts[3] == 100);

    // a single item still shuffles without error
    std::vector<QAItem> one(items.begin(), items.begin() + 1);
    balanced_shuffle(one, 5);
    CHECK(one.size() == 1);
}

TEST_CASE("prompt templates carry the documented format lines") {
    auto set = scenes::benchmark_scene_set(1, 77, 48);
    GenConfig cfg;
    cfg.per_category_count = 1;

    SplitRng r1(21);
    QAItem rank = gen_item(set[0], category(CategoryId::RegionRanking), cfg, r1);
    CHECK(rank.prompt.find("\"Region A, Region B, Region C\"") != std::string::npos);
    CHECK(rank.prompt.find("System: You are a precise geospatial assistant. Answer concisely.") !=
          std::string::npos);

    SplitRng r2(22);
    QAItem svf = gen_item(set[0], category(CategoryId::SvfValue), cfg, r2);
    CHECK(svf.prompt.find("X.X (a single number in [0.0, 1.0], rounded to 1 decimal)") !=
          std::string::npos);

    SplitRng r3(23);
    QAItem sky = gen_item(set[0], category(CategoryId::SkyVisibility), cfg, r3);
    CHECK(sky.prompt.find("Which location has the highest sky visibility?") !=
          std::string::npos);
    CHECK(sky.prompt.find("Hint: Areas with fewer obstacles have a higher sky view factor.") !=
          std::string::npos);
    CHECK(sky.prompt.find("Scoring method:") != std::string::npos);
    CHECK(sky.prompt.find("(0, 0) represents the top-left corner") != std::string::npos);
    for (const auto& opt : sky.options) {
        CHECK(opt.rfind("Point (", 0) == 0);
        CHECK(opt.find("%)") != std::string::npos);
    }

    SplitRng r4(24);
    QAItem land = gen_item(set[0], category(CategoryId::TopLandUses), cfg, r4);
    CHECK(land.prompt.find("Comma-separated labels in lowercase.") != std::string::npos);
    CHECK(land.prompt.find("residential, agricultural, forest, grassland, railways, roads, "
                           "bare_soil, buildings, water, other") != std::string::npos);

    // tier-1 choice prompts do not embed a scoring paragraph
    SplitRng r5(25);
    QAItem highest = gen_item(set[0], category(CategoryId::HighestRegion), cfg, r5);
    CHECK(highest.prompt.find("Scoring method:") == std::string::npos);
    CHECK(highest.prompt.find("Region X") != std::string::npos);
}

TEST_CASE("jsonl round trip and byte determinism") {
    const std::string path_a = temp_path("skybench_items_a.jsonl");
    const std::string path_b = temp_path("skybench_items_b.jsonl");

    emit_jsonl({}, path_a);
    CHECK(slurp(path_a).empty());

    auto set = scenes::benchmark_scene_set(2, 55, 48);
    GenConfig cfg;
    cfg.seed = 4242;
    cfg.per_category_count = 2;
    GenBatchResult one = gen_batch(set, cfg);
    GenBatchResult two = gen_batch(set, cfg);
    emit_jsonl(one.items, path_a);
    emit_jsonl(two.items, path_b);
    CHECK(slurp(path_a) == slurp(path_b));  // byte-identical under one seed

    auto loaded = load_items_jsonl(path_a);
    REQUIRE(loaded.size() == one.items.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].item_id == one.items[i].item_id);
        CHECK(loaded[i].prompt == one.items[i].prompt);
        CHECK(loaded[i].ground_truth == one.items[i].ground_truth);
        CHECK(loaded[i].options == one.items[i].options);
        CHECK(loaded[i].option_scores == one.items[i].option_scores);
        CHECK(loaded[i].gen_seed == one.items[i].gen_seed);
    }

    // a different seed produces a different batch
    GenConfig other = cfg;
    other.seed = 4243;
    GenBatchResult three = gen_batch(set, other);
    emit_jsonl(three.items, path_b);
    CHECK(slurp(path_a) != slurp(path_b));

    std::remove(path_a.c_str());
    std::remove(path_b.c_str());
}

TEST_CASE("balance audit flags skew and passes balanced batches") {
    std::vector<QAItem> skewed;
    for (int i = 0; i < 100; ++i) {
        QAItem it;
        it.item_id = std::to_string(i);
        it.category = CategoryId::HighestRegion;
        it.option_scores = {1.0, 0.5, 0.3, 0.1};  // winner always position 0
        skewed.push_back(it);
    }
    BalanceReport bad = audit_balance(skewed);
    REQUIRE(bad.categories.size() == 1);
    CHECK(bad.categories[0].position_counts[0] == 100);
    CHECK(bad.categories[0].chi_square == doctest::Approx(300.0));
    CHECK(bad.categories[0].p_value < 0.01);

    // shuffling needs selectors to permute
    for (auto& it : skewed)
        it.regions = {RegionPct{0, 0, 10, 10}, RegionPct{20, 20, 30, 30},
                      RegionPct{40, 40, 50, 50}, RegionPct{60, 60, 70, 70}};
    balanced_shuffle(skewed, 1);
    BalanceReport good = audit_balance(skewed);
    CHECK(good.categories[0].chi_square == doctest::Approx(0.0));
    CHECK(good.categories[0].p_value > 0.99);
}

TEST_CASE("chi-square p-values behave") {
    CHECK(chi_square_p_value(0.0, 3) == doctest::Approx(1.0));
    // df=1: P(chi2 > 3.841) ~ 0.05
    CHECK(chi_square_p_value(3.841, 1) == doctest::Approx(0.05).epsilon(0.01));
    // df=3: P(chi2 > 11.345) ~ 0.01
    CHECK(chi_square_p_value(11.345, 3) == doctest::Approx(0.01).epsilon(0.02));
    CHECK(chi_square_p_value(300.0, 3) < 1e-10);
}

TEST_CASE("sensitivity control run reports zero change") {
    auto set = scenes::benchmark_scene_set(2, 91, 48);
    GenConfig cfg;
    cfg.seed = 7;
    SensitivityReport rep = run_sensitivity(set, cfg, 10);
    CHECK(rep.n_questions == 10);
    REQUIRE(!rep.entries.empty());
    CHECK(rep.entries[0].coefficient == "control");
    CHECK(rep.entries[0].changed == 0);
    CHECK(rep.entries[0].change_rate == 0.0);
    CHECK(rep.entries.size() == 9);  // control + 4 coefficients x 2 deltas

    SensitivityReport again = run_sensitivity(set, cfg, 10);
    for (size_t i = 0; i < rep.entries.size(); ++i)
        CHECK(rep.entries[i].changed == again.entries[i].changed);
}
