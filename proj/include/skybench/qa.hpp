#pragma once

// Deterministic benchmark item generation: selector sampling with diversity
// margins, ground-truth computation through the metric layer, balanced option
// shuffling, prompt rendering and JSONL emission.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "skybench/metrics.hpp"
#include "skybench/scene.hpp"

namespace skybench {

// Raised when a scene cannot host a category (tied candidates, missing
// classes, infeasible selector packing). Callers skip, they do not abort.
struct SuitabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class CategoryId {
    SunExposure,
    SvfValue,
    RegionRanking,
    RegionalSvfVariability,
    HeightAverage,
    HighestRegion,
    TopLandUses,
    LandcoverType,
    SkyVisibility,
    VisibilityRange,
    SpatialOpenness,
    BuildingDensity,
};

enum class AnswerFormat {
    NumericSvf,
    NumericHeight,
    Ranking,
    RegionChoice,
    PointChoice,
    MultiLabel,
};

struct Category {
    CategoryId id;
    int tier;  // 1 or 2
    AnswerFormat format;
    int option_count;  // 0 for numeric/multilabel formats
};

const std::vector<Category>& all_categories();
const Category& category(CategoryId id);
std::string to_string(CategoryId id);
CategoryId category_id_from_string(const std::string& s);

// Splittable counter-based generator (splitmix64). Identical sequences on
// every platform; random state is always passed explicitly.
class SplitRng {
public:
    explicit SplitRng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    // Uniform in [0,1).
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    // Uniform integer in [0,n), unbiased.
    uint64_t below(uint64_t n);

private:
    uint64_t state_;
};

uint64_t derive_seed(uint64_t base, std::string_view tag);
uint64_t derive_seed(uint64_t base, uint64_t tag);

struct GenConfig {
    uint64_t seed = 0;
    int per_category_count = 10;
    double min_score_margin = 0.05;
    double min_spatial_separation = 10.0;  // percent of image size
    double region_size_min = 8.0;          // percent
    double region_size_max = 40.0;         // percent
    MetricWeights weights;
    std::vector<CategoryId> categories;  // empty selects all twelve

    void validate() const;
};

struct QAItem {
    std::string item_id;
    std::string scene_id;
    CategoryId category = CategoryId::SunExposure;
    int tier = 1;
    std::string prompt;
    std::vector<std::string> options;  // presentation order; empty for numeric/multilabel
    std::string ground_truth;          // canonical lowercase answer string
    std::vector<RegionPct> regions;    // selectors aligned with options where applicable
    std::vector<PointPct> points;
    uint64_t gen_seed = 0;
    std::vector<double> option_scores;  // metric per option, aligned with options
};

struct Selectors {
    std::vector<RegionPct> regions;
    std::vector<PointPct> points;
};

// Uniformly samples the category's selectors: regions on the integer percent
// lattice (size within region_size_range, aspect in [0.5,2]), points on the
// 0.1 percent lattice, pairwise center separation >= min_spatial_separation.
Selectors sample_selectors(int width, int height, const Category& cat,
                           const GenConfig& config, SplitRng& rng);

// One item: samples selectors, computes the category metric for every
// candidate, enforces the winner margin, renders the prompt.
QAItem gen_item(const SceneContext& scene, const Category& cat, const GenConfig& config,
                SplitRng& rng);

// Re-evaluates the category metric on an item's stored selectors (the
// self-consistency check: the argmax must reproduce the stored ground truth).
std::vector<double> recompute_option_scores(const SceneContext& scene, const QAItem& item,
                                            const MetricWeights& weights);

// Permutes each choice item's options so correct positions are balanced per
// category (counts deviate from uniform by at most one per residue class),
// then re-renders prompts. Single pass, deterministic under seed.
void balanced_shuffle(std::vector<QAItem>& items, uint64_t seed,
                      const MetricWeights& weights = MetricWeights::standard());

// Pure function of the item's category and selectors. The weights only feed
// the tier-2 scoring-method paragraph.
std::string render_prompt(const QAItem& item,
                          const MetricWeights& weights = MetricWeights::standard());

void emit_jsonl(const std::vector<QAItem>& items, const std::string& path);
std::vector<QAItem> load_items_jsonl(const std::string& path);

struct BalanceReport {
    struct PerCategory {
        std::string category;
        std::vector<long long> position_counts;
        long long total = 0;
        double chi_square = 0;
        double p_value = 1;
    };
    std::vector<PerCategory> categories;
};

BalanceReport audit_balance(const std::vector<QAItem>& items);
std::string balance_report_json(const BalanceReport& report);

// Upper-tail p-value of a chi-square statistic.
double chi_square_p_value(double chi2, int dof);

struct GenBatchResult {
    std::vector<QAItem> items;
    std::map<std::string, int> per_category_counts;
    std::vector<std::string> warnings;
};

// Full pipeline over a scene set: per-category generation with scene
// round-robin and suitability skips, then the balanced shuffle.
GenBatchResult gen_batch(const std::vector<SceneContext>& scenes, const GenConfig& config);

// Raw ingredients of the sky-visibility score at a point; the sensitivity
// study re-weights these without resampling.
struct SkyVisibilityComponents {
    double svf = 0;
    double building_fraction = 0;
    double edge_pen = 0;
};

SkyVisibilityComponents sky_visibility_components(const SceneContext& scene,
                                                  const PointPct& point);
double sky_visibility_from_components(const SkyVisibilityComponents& c,
                                      const MetricWeights& w);

struct SensitivityReport {
    int n_questions = 0;
    struct Entry {
        std::string coefficient;  // "control", "svf", "building_penalty", ...
        double delta = 0;
        int changed = 0;
        double change_rate = 0;
    };
    std::vector<Entry> entries;
};

// Reproduces the weight-perturbation protocol on sky-visibility questions:
// each coefficient is moved by +/-0.1 one at a time and top-1 winners are
// recomputed from the stored selectors.
SensitivityReport run_sensitivity(const std::vector<SceneContext>& scenes,
                                  const GenConfig& config, int n_questions = 30);
std::string sensitivity_report_json(const SensitivityReport& report);

}  // namespace skybench
