#pragma once

// Tolerant free-text response parsing and category-specific correctness
// judgment, plus per-category / rollup accuracy aggregation.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skybench/qa.hpp"

namespace skybench {

enum class Verdict { Correct, Incorrect, FormatError, Excluded };
std::string to_string(Verdict v);

struct ParsedAnswer {
    CategoryId category = CategoryId::SunExposure;
    std::optional<double> number;       // numeric formats
    std::vector<std::string> labels;    // multilabel set, normalized
    std::vector<std::string> ranking;   // ordered "region x" entries
    std::string option;                 // "region c" / "point (x.x%, y.y%)"
    std::string raw;
};

struct ScoreRecord {
    std::string item_id;
    Verdict verdict = Verdict::Incorrect;
    double detail = 0;  // tolerance slack or jaccard value actually used
};

// Lowercases, collapses whitespace, strips surrounding punctuation and
// canonicalizes comma-separated lists ("FOREST ,WATER" -> "forest, water").
std::string normalize(const std::string& text);

// Scans the response from the last line upward for the first string matching
// the category's answer grammar. Never throws on arbitrary text; a nullopt is
// a format error, not an exception.
std::optional<ParsedAnswer> parse_answer(CategoryId category, const std::string& text);

struct CanonicalLabels {
    std::vector<std::string> labels;
    bool excluded = false;  // a commercial label appeared
};

// roads and bare_soil merge into ground_surface; commercial marks the sample
// excluded rather than wrong.
CanonicalLabels canonicalize_landcover(const std::vector<std::string>& labels);

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

// exact for 0 m; +/-10 m if <= 30 m; +/-30% above 30 m (boundaries inclusive)
bool score_height(double pred, double gt);
// absolute error <= 0.05
bool score_svf_value(double pred, double gt);

ScoreRecord score_item(const QAItem& item, const std::string& response);

struct CategoryReport {
    struct Bucket {
        long long total = 0;
        long long correct = 0;
        long long incorrect = 0;
        long long format_errors = 0;
        long long excluded = 0;
        double accuracy_pct = 0;
        double format_error_pct = 0;
    };
    std::map<std::string, Bucket> per_category;
    std::map<std::string, Bucket> rollups;  // svf_inference, height_inference,
                                            // land_use_land_cover, multi_factor
    Bucket overall;
    std::vector<std::string> unmatched_response_ids;
    std::vector<std::string> missing_response_ids;
};

CategoryReport aggregate(const std::vector<ScoreRecord>& records,
                         const std::vector<QAItem>& items);

struct ScoringRun {
    std::vector<ScoreRecord> records;
    std::vector<std::string> unmatched_response_ids;  // responses without items
    std::vector<std::string> missing_response_ids;    // items without responses
};

// Scores every item against its response (missing responses become format
// errors) and collects id mismatches.
ScoringRun score_all(const std::vector<QAItem>& items,
                     const std::map<std::string, std::string>& responses);

// Responses file: JSONL of {item_id, response_text}.
std::map<std::string, std::string> load_responses_jsonl(const std::string& path);

std::string report_json(const CategoryReport& report);
CategoryReport report_from_json(const std::string& json_text);
std::string report_table(const CategoryReport& report);

}  // namespace skybench
