#include "skybench/scorer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

namespace skybench {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Correct: return "correct";
        case Verdict::Incorrect: return "incorrect";
        case Verdict::FormatError: return "format_error";
        case Verdict::Excluded: return "excluded";
    }
    return "incorrect";
}

std::string normalize(const std::string& text) {
    std::string s;
    s.reserve(text.size());
    for (char c : text) {
        unsigned char u = static_cast<unsigned char>(c);
        s.push_back(std::isspace(u) ? ' ' : static_cast<char>(std::tolower(u)));
    }
    // collapse runs of spaces
    std::string t;
    t.reserve(s.size());
    for (char c : s) {
        if (c == ' ' && !t.empty() && t.back() == ' ') continue;
        t.push_back(c);
    }
    // canonical comma spacing: no space before, one space after
    std::string u;
    u.reserve(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        if (t[i] == ',') {
            while (!u.empty() && u.back() == ' ') u.pop_back();
            u.push_back(',');
            u.push_back(' ');
            while (i + 1 < t.size() && t[i + 1] == ' ') ++i;
        } else {
            u.push_back(t[i]);
        }
    }
    // strip surrounding whitespace and sentence punctuation
    const std::string strip = " \t'\"`.,;:!?";
    size_t b = u.find_first_not_of(strip);
    if (b == std::string::npos) return {};
    size_t e = u.find_last_not_of(strip);
    return u.substr(b, e - b + 1);
}

namespace {

const std::regex kNumberRe(R"([-+]?[0-9]+(?:\.[0-9]+)?)");
// only a-d are real option labels; anything wider lets words like
// "regions" swallow a letter
const std::regex kRegionRe(R"(region\s*([a-d])\b)");
const std::regex kPointRe(
    R"(point\s*\(\s*([-+]?[0-9]+(?:\.[0-9]+)?)\s*%?\s*,\s*([-+]?[0-9]+(?:\.[0-9]+)?)\s*%?\s*\))");

std::string canonical_point(double x, double y) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "point (%.1f%%, %.1f%%)", x, y);
    return buf;
}

// The ten base classes plus the merged/excluded labels the revision note adds.
bool known_label(const std::string& label) {
    if (label == "ground_surface" || label == "commercial") return true;
    for (const auto& l : landcover_vocabulary())
        if (l == label) return true;
    return false;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    lines.push_back(cur);
    return lines;
}

std::optional<ParsedAnswer> try_line(CategoryId cat, const std::string& norm_line) {
    if (norm_line.empty()) return std::nullopt;
    ParsedAnswer ans;
    ans.category = cat;
    const AnswerFormat format = category(cat).format;
    std::smatch m;

    switch (format) {
        case AnswerFormat::NumericSvf:
        case AnswerFormat::NumericHeight: {
            if (!std::regex_search(norm_line, m, kNumberRe)) return std::nullopt;
            ans.number = std::stod(m.str(0));
            return ans;
        }
        case AnswerFormat::RegionChoice: {
            if (!std::regex_search(norm_line, m, kRegionRe)) return std::nullopt;
            ans.option = "region " + m.str(1);
            return ans;
        }
        case AnswerFormat::PointChoice: {
            if (!std::regex_search(norm_line, m, kPointRe)) return std::nullopt;
            ans.option = canonical_point(std::stod(m.str(1)), std::stod(m.str(2)));
            return ans;
        }
        case AnswerFormat::Ranking: {
            auto begin = std::sregex_iterator(norm_line.begin(), norm_line.end(), kRegionRe);
            for (auto it = begin; it != std::sregex_iterator(); ++it)
                ans.ranking.push_back("region " + (*it).str(1));
            if (ans.ranking.size() < 2) return std::nullopt;
            return ans;
        }
        case AnswerFormat::MultiLabel: {
            // Comma list where every token is a vocabulary label; a single
            // stray word disqualifies the line. A leading "answer:"-style
            // prefix is dropped first.
            std::string body = norm_line;
            const auto colon = body.rfind(':');
            if (colon != std::string::npos) body = normalize(body.substr(colon + 1));
            std::stringstream ss(body);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                std::string lbl = normalize(tok);
                std::replace(lbl.begin(), lbl.end(), ' ', '_');
                if (lbl.empty() || !known_label(lbl)) return std::nullopt;
                if (std::find(ans.labels.begin(), ans.labels.end(), lbl) == ans.labels.end())
                    ans.labels.push_back(lbl);
            }
            if (ans.labels.empty()) return std::nullopt;
            return ans;
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<ParsedAnswer> parse_answer(CategoryId cat, const std::string& text) {
    auto lines = split_lines(text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        auto ans = try_line(cat, normalize(*it));
        if (ans) {
            ans->raw = text;
            return ans;
        }
    }
    return std::nullopt;
}

CanonicalLabels canonicalize_landcover(const std::vector<std::string>& labels) {
    CanonicalLabels out;
    for (const auto& l : labels) {
        if (l == "commercial") {
            out.excluded = true;
            continue;
        }
        std::string mapped = (l == "roads" || l == "bare_soil") ? "ground_surface" : l;
        if (std::find(out.labels.begin(), out.labels.end(), mapped) == out.labels.end())
            out.labels.push_back(mapped);
    }
    return out;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 1.0;
    size_t inter = 0;
    for (const auto& x : sa)
        if (sb.count(x)) ++inter;
    const size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {
// decimal inputs like 0.55 - 0.5 land a few ulps above the written bound;
// the slack keeps the documented "<=" boundaries inclusive
constexpr double kBoundarySlack = 1e-9;
}  // namespace

bool score_height(double pred, double gt) {
    if (gt == 0.0) return pred == 0.0;
    if (gt <= 30.0) return std::fabs(pred - gt) <= 10.0 + kBoundarySlack;
    return std::fabs(pred - gt) <= 0.3 * std::fabs(gt) + kBoundarySlack;
}

bool score_svf_value(double pred, double gt) {
    return std::fabs(pred - gt) <= 0.05 + kBoundarySlack;
}

namespace {

double gt_number(const QAItem& item) {
    // ground truths are canonical ("0.8", "30 m"); take the leading number
    std::smatch m;
    if (!std::regex_search(item.ground_truth, m, kNumberRe))
        throw ValidationError("item " + item.item_id + ": non-numeric ground truth '" +
                              item.ground_truth + "'");
    return std::stod(m.str(0));
}

std::vector<std::string> split_list(const std::string& canonical) {
    std::vector<std::string> out;
    std::stringstream ss(canonical);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::string t = normalize(tok);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

bool set_equal(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    return sa == sb;
}

}  // namespace

ScoreRecord score_item(const QAItem& item, const std::string& response) {
    ScoreRecord rec;
    rec.item_id = item.item_id;

    auto parsed = parse_answer(item.category, response);
    if (!parsed) {
        rec.verdict = Verdict::FormatError;
        return rec;
    }

    const AnswerFormat format = category(item.category).format;
    switch (format) {
        case AnswerFormat::NumericSvf: {
            const double gt = gt_number(item);
            const double pred = *parsed->number;
            rec.detail = std::fabs(pred - gt);
            // out-of-range answers are recoverable, hence wrong rather than
            // format errors
            rec.verdict = (pred >= 0.0 && pred <= 1.0 && score_svf_value(pred, gt))
                              ? Verdict::Correct
                              : Verdict::Incorrect;
            return rec;
        }
        case AnswerFormat::NumericHeight: {
            const double gt = gt_number(item);
            const double pred = *parsed->number;
            rec.detail = std::fabs(pred - gt);
            rec.verdict = score_height(pred, gt) ? Verdict::Correct : Verdict::Incorrect;
            return rec;
        }
        case AnswerFormat::RegionChoice:
        case AnswerFormat::PointChoice: {
            rec.verdict = (parsed->option == normalize(item.ground_truth))
                              ? Verdict::Correct
                              : Verdict::Incorrect;
            return rec;
        }
        case AnswerFormat::Ranking: {
            const auto gt = split_list(item.ground_truth);
            rec.verdict = (parsed->ranking == gt) ? Verdict::Correct : Verdict::Incorrect;
            return rec;
        }
        case AnswerFormat::MultiLabel: {
            const auto gt = split_list(item.ground_truth);
            if (item.category == CategoryId::LandcoverType) {
                CanonicalLabels cp = canonicalize_landcover(parsed->labels);
                CanonicalLabels cg = canonicalize_landcover(gt);
                if (cp.excluded || cg.excluded) {
                    rec.verdict = Verdict::Excluded;
                    return rec;
                }
                if (cg.labels.empty()) {
                    rec.verdict = Verdict::Incorrect;
                    return rec;
                }
                rec.detail = jaccard(cp.labels, cg.labels);
                rec.verdict = rec.detail >= 0.8 ? Verdict::Correct : Verdict::Incorrect;
                return rec;
            }
            // top_land_uses: order-independent exact set match
            rec.verdict = set_equal(parsed->labels, gt) ? Verdict::Correct : Verdict::Incorrect;
            return rec;
        }
    }
    rec.verdict = Verdict::Incorrect;
    return rec;
}

namespace {

const std::map<std::string, std::vector<CategoryId>>& rollup_map() {
    static const std::map<std::string, std::vector<CategoryId>> m = {
        {"svf_inference",
         {CategoryId::SvfValue, CategoryId::RegionRanking,
          CategoryId::RegionalSvfVariability, CategoryId::SunExposure}},
        {"height_inference", {CategoryId::HeightAverage, CategoryId::HighestRegion}},
        {"land_use_land_cover", {CategoryId::TopLandUses, CategoryId::LandcoverType}},
        {"multi_factor",
         {CategoryId::SpatialOpenness, CategoryId::SkyVisibility,
          CategoryId::BuildingDensity, CategoryId::VisibilityRange}},
    };
    return m;
}

void add_to_bucket(CategoryReport::Bucket& b, Verdict v) {
    ++b.total;
    switch (v) {
        case Verdict::Correct: ++b.correct; break;
        case Verdict::Incorrect: ++b.incorrect; break;
        case Verdict::FormatError: ++b.format_errors; break;
        case Verdict::Excluded: ++b.excluded; break;
    }
}

void finish_bucket(CategoryReport::Bucket& b) {
    // excluded samples leave both numerator and denominator
    const long long denom = b.total - b.excluded;
    b.accuracy_pct = denom > 0 ? 100.0 * b.correct / denom : 0.0;
    b.format_error_pct = denom > 0 ? 100.0 * b.format_errors / denom : 0.0;
}

}  // namespace

CategoryReport aggregate(const std::vector<ScoreRecord>& records,
                         const std::vector<QAItem>& items) {
    std::map<std::string, CategoryId> item_category;
    for (const auto& item : items) item_category[item.item_id] = item.category;

    CategoryReport report;
    std::map<CategoryId, CategoryReport::Bucket> by_cat;
    for (const auto& rec : records) {
        auto it = item_category.find(rec.item_id);
        if (it == item_category.end())
            throw ValidationError("score record for unknown item id '" + rec.item_id + "'");
        add_to_bucket(by_cat[it->second], rec.verdict);
        add_to_bucket(report.overall, rec.verdict);
    }

    for (auto& [cat, bucket] : by_cat) {
        finish_bucket(bucket);
        report.per_category[to_string(cat)] = bucket;
    }
    for (const auto& [name, cats] : rollup_map()) {
        CategoryReport::Bucket roll;
        for (CategoryId c : cats) {
            auto it = by_cat.find(c);
            if (it == by_cat.end()) continue;
            roll.total += it->second.total;
            roll.correct += it->second.correct;
            roll.incorrect += it->second.incorrect;
            roll.format_errors += it->second.format_errors;
            roll.excluded += it->second.excluded;
        }
        finish_bucket(roll);
        report.rollups[name] = roll;
    }
    finish_bucket(report.overall);
    return report;
}

ScoringRun score_all(const std::vector<QAItem>& items,
                     const std::map<std::string, std::string>& responses) {
    ScoringRun run;
    std::set<std::string> item_ids;
    for (const auto& item : items) {
        item_ids.insert(item.item_id);
        auto it = responses.find(item.item_id);
        const std::string& resp = it == responses.end() ? std::string() : it->second;
        if (it == responses.end()) run.missing_response_ids.push_back(item.item_id);
        run.records.push_back(score_item(item, resp));
    }
    for (const auto& [id, _] : responses)
        if (!item_ids.count(id)) run.unmatched_response_ids.push_back(id);
    return run;
}

std::map<std::string, std::string> load_responses_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open responses file: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = ordered_json::parse(line);
            out[j.at("item_id").get<std::string>()] = j.at("response_text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

namespace {

ordered_json bucket_json(const CategoryReport::Bucket& b) {
    return {{"total", b.total},
            {"correct", b.correct},
            {"incorrect", b.incorrect},
            {"format_errors", b.format_errors},
            {"excluded", b.excluded},
            {"accuracy_pct", b.accuracy_pct},
            {"format_error_pct", b.format_error_pct}};
}

}  // namespace

std::string report_json(const CategoryReport& report) {
    ordered_json j;
    ordered_json per = ordered_json::object();
    for (const auto& [name, b] : report.per_category) per[name] = bucket_json(b);
    j["per_category"] = per;
    ordered_json rolls = ordered_json::object();
    for (const auto& [name, b] : report.rollups) rolls[name] = bucket_json(b);
    j["rollups"] = rolls;
    j["overall"] = bucket_json(report.overall);
    j["unmatched_response_ids"] = report.unmatched_response_ids;
    j["missing_response_ids"] = report.missing_response_ids;
    return j.dump(2) + "\n";
}

namespace {

CategoryReport::Bucket bucket_from_json(const ordered_json& j) {
    CategoryReport::Bucket b;
    b.total = j.at("total").get<long long>();
    b.correct = j.at("correct").get<long long>();
    b.incorrect = j.at("incorrect").get<long long>();
    b.format_errors = j.at("format_errors").get<long long>();
    b.excluded = j.at("excluded").get<long long>();
    b.accuracy_pct = j.at("accuracy_pct").get<double>();
    b.format_error_pct = j.at("format_error_pct").get<double>();
    return b;
}

}  // namespace

CategoryReport report_from_json(const std::string& json_text) {
    CategoryReport report;
    try {
        auto j = ordered_json::parse(json_text);
        for (const auto& [name, b] : j.at("per_category").items())
            report.per_category[name] = bucket_from_json(b);
        for (const auto& [name, b] : j.at("rollups").items())
            report.rollups[name] = bucket_from_json(b);
        report.overall = bucket_from_json(j.at("overall"));
        report.unmatched_response_ids =
            j.at("unmatched_response_ids").get<std::vector<std::string>>();
        report.missing_response_ids =
            j.at("missing_response_ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed report JSON: ") + e.what());
    }
    return report;
}

std::string report_table(const CategoryReport& report) {
    std::ostringstream out;
    char line[128];
    out << "Category                        N    Acc%  FmtErr%  Excl\n";
    out << "--------------------------------------------------------\n";
    for (const auto& [name, b] : report.per_category) {
        std::snprintf(line, sizeof(line), "%-28s %5lld  %6.1f  %6.1f  %4lld\n", name.c_str(),
                      b.total, b.accuracy_pct, b.format_error_pct, b.excluded);
        out << line;
    }
    out << "--------------------------------------------------------\n";
    static const std::vector<std::pair<std::string, std::string>> kRollupNames = {
        {"svf_inference", "SVF inference"},
        {"height_inference", "Height inference"},
        {"land_use_land_cover", "Land Use/LC"},
        {"multi_factor", "Multi-factor"},
    };
    for (const auto& [key, label] : kRollupNames) {
        auto it = report.rollups.find(key);
        if (it == report.rollups.end()) continue;
        std::snprintf(line, sizeof(line), "%-28s %5lld  %6.1f  %6.1f  %4lld\n", label.c_str(),
                      it->second.total, it->second.accuracy_pct,
                      it->second.format_error_pct, it->second.excluded);
        out << line;
    }
    std::snprintf(line, sizeof(line), "%-28s %5lld  %6.1f  %6.1f  %4lld\n", "Overall",
                  report.overall.total, report.overall.accuracy_pct,
                  report.overall.format_error_pct, report.overall.excluded);
    out << line;
    return out.str();
}

}  // namespace skybench
