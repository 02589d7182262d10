// skybench command-line tool: SVF computation, scene statistics, benchmark
// item generation, response scoring and the weight-sensitivity study.
//
// Exit codes: 0 success, 1 validation failure, 2 I/O failure.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "skybench/metrics.hpp"
#include "skybench/qa.hpp"
#include "skybench/raster.hpp"
#include "skybench/scene.hpp"
#include "skybench/scorer.hpp"
#include "skybench/svf.hpp"

namespace fs = std::filesystem;
using namespace skybench;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void write_manifest(const std::string& out_path, const std::string& command,
                    const std::string& config_path,
                    const std::vector<std::string>& inputs, uint64_t seed) {
    ordered_json j;
    j["command"] = command;
    j["config_path"] = config_path;
    j["inputs"] = inputs;
    j["seed"] = seed;
    j["tool_version"] = kVersion;
    j["timestamp"] = iso_timestamp();
    std::ofstream out(out_path + ".manifest.json");
    if (!out) throw IoError("cannot write manifest: " + out_path + ".manifest.json");
    out << j.dump(2) << "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open output file for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

// Dotted weight-override keys, e.g. "density.bcr=0.5" or
// "sky_visibility.svf=0.7". Returns false for unrecognized keys.
bool apply_weight_override(const std::string& key, const std::string& value,
                           MetricWeights& w) {
    static const std::map<std::string, double MetricWeights::Density::*> density = {
        {"bcr", &MetricWeights::Density::bcr},
        {"far", &MetricWeights::Density::far},
        {"svf_comp", &MetricWeights::Density::svf_comp},
        {"edge_density", &MetricWeights::Density::edge_density},
        {"darkness", &MetricWeights::Density::darkness},
    };
    static const std::map<std::string, double MetricWeights::Openness::*> openness = {
        {"openness_index", &MetricWeights::Openness::openness_index},
        {"mean_svf", &MetricWeights::Openness::mean_svf},
        {"low_building", &MetricWeights::Openness::low_building},
        {"terrain_flatness", &MetricWeights::Openness::terrain_flatness},
        {"visual_simplicity", &MetricWeights::Openness::visual_simplicity},
    };
    static const std::map<std::string, double MetricWeights::SkyVisibility::*> sky = {
        {"svf", &MetricWeights::SkyVisibility::svf},
        {"building_penalty", &MetricWeights::SkyVisibility::building_penalty},
        {"edge_penalty", &MetricWeights::SkyVisibility::edge_penalty},
        {"window_norm", &MetricWeights::SkyVisibility::window_norm},
    };
    static const std::map<std::string, double MetricWeights::VisibilityRange::*> vis = {
        {"viewshed", &MetricWeights::VisibilityRange::viewshed},
        {"svf_context", &MetricWeights::VisibilityRange::svf_context},
        {"terrain", &MetricWeights::VisibilityRange::terrain},
    };
    const auto dot = key.find('.');
    if (dot == std::string::npos) return false;
    const std::string group = key.substr(0, dot);
    const std::string field = key.substr(dot + 1);
    if (group == "density") {
        auto it = density.find(field);
        if (it == density.end()) return false;
        w.density.*(it->second) = std::stod(value);
    } else if (group == "openness") {
        auto it = openness.find(field);
        if (it == openness.end()) return false;
        w.openness.*(it->second) = std::stod(value);
    } else if (group == "sky_visibility") {
        auto it = sky.find(field);
        if (it == sky.end()) return false;
        w.sky_visibility.*(it->second) = std::stod(value);
    } else if (group == "visibility_range") {
        auto it = vis.find(field);
        if (it == vis.end()) return false;
        w.visibility_range.*(it->second) = std::stod(value);
    } else {
        return false;
    }
    return true;
}

// Plain-text key=value configuration shared by gen/sensitivity.
void apply_config_file(const std::string& path, GenConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        if (eq == std::string::npos)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "per_category_count") cfg.per_category_count = std::stoi(value);
            else if (key == "min_score_margin") cfg.min_score_margin = std::stod(value);
            else if (key == "min_spatial_separation") cfg.min_spatial_separation = std::stod(value);
            else if (key == "region_size_min") cfg.region_size_min = std::stod(value);
            else if (key == "region_size_max") cfg.region_size_max = std::stod(value);
            else if (key == "edge_penalty_weight") cfg.weights.sky_visibility.edge_penalty = std::stod(value);
            else if (key == "categories") {
                cfg.categories.clear();
                std::stringstream ss(value);
                std::string tok;
                while (std::getline(ss, tok, ','))
                    cfg.categories.push_back(category_id_from_string(tok));
            } else if (!apply_weight_override(key, value, cfg.weights)) {
                throw ValidationError(path + ":" + std::to_string(lineno) + ": unknown key '" +
                                      key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": bad value '" +
                                  value + "' for key '" + key + "'");
        }
    }
    cfg.weights.validate();
}

std::vector<std::string> collect_scene_dirs(const std::vector<std::string>& scene_flags,
                                            const std::string& scenes_parent) {
    std::vector<std::string> dirs = scene_flags;
    if (!scenes_parent.empty()) {
        if (!fs::is_directory(scenes_parent))
            throw IoError("scene parent directory not found: " + scenes_parent);
        std::vector<std::string> found;
        for (const auto& entry : fs::directory_iterator(scenes_parent))
            if (entry.is_directory() && fs::exists(entry.path() / "dsm.grid"))
                found.push_back(entry.path().string());
        std::sort(found.begin(), found.end());
        dirs.insert(dirs.end(), found.begin(), found.end());
    }
    if (dirs.empty()) throw ValidationError("no scene directories given");
    return dirs;
}

std::vector<SceneContext> load_and_prepare(const std::vector<std::string>& dirs,
                                           int threads) {
    std::vector<SceneContext> scenes;
    scenes.reserve(dirs.size());
    for (const auto& d : dirs) scenes.push_back(prepare_scene(load_scene_dir(d), {}, threads));
    return scenes;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skybench: raster spatial metrics, benchmark generation and scoring"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // --- svf ---
    auto* svf_cmd = app.add_subcommand("svf", "compute a sky-view-factor raster from a DSM");
    std::string svf_dsm, svf_out;
    SvfParams svf_params;
    int svf_threads = 1;
    svf_cmd->add_option("--dsm", svf_dsm, "input DSM grid file")->required();
    svf_cmd->add_option("--out", svf_out, "output SVF grid file")->required();
    svf_cmd->add_option("--azimuths", svf_params.n_azimuths, "number of scan azimuths");
    svf_cmd->add_option("--radius", svf_params.max_radius, "scan radius in meters");
    svf_cmd->add_option("--step", svf_params.step, "ray step in meters (0 = resolution)");
    svf_cmd->add_option("--threads", svf_threads, "worker threads");

    // --- stats ---
    auto* stats_cmd = app.add_subcommand("stats", "emit scene statistics JSON");
    std::string stats_scene, stats_out;
    int stats_threads = 1;
    stats_cmd->add_option("--scene", stats_scene, "scene directory")->required();
    stats_cmd->add_option("--out", stats_out, "output JSON path")->required();
    stats_cmd->add_option("--threads", stats_threads, "worker threads");

    // --- gen ---
    auto* gen_cmd = app.add_subcommand("gen", "generate benchmark items as JSONL");
    std::vector<std::string> gen_scenes;
    std::string gen_parent, gen_config, gen_out;
    uint64_t gen_seed = 0;
    int gen_count = -1;
    int gen_threads = 1;
    gen_cmd->add_option("--scene", gen_scenes, "scene directory (repeatable)");
    gen_cmd->add_option("--scenes", gen_parent, "parent directory of scene subdirectories");
    gen_cmd->add_option("--config", gen_config, "key=value config file");
    gen_cmd->add_option("--out", gen_out, "output JSONL path")->required();
    auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "generation seed");
    gen_cmd->add_option("--count", gen_count, "items per category (overrides config)");
    gen_cmd->add_option("--threads", gen_threads, "worker threads for SVF preparation");

    // --- score ---
    auto* score_cmd = app.add_subcommand("score", "score model responses against items");
    std::string score_items, score_responses, score_out;
    score_cmd->add_option("--items", score_items, "items JSONL")->required();
    score_cmd->add_option("--responses", score_responses, "responses JSONL")->required();
    score_cmd->add_option("--out", score_out, "report JSON path")->required();

    // --- report ---
    auto* report_cmd = app.add_subcommand("report", "render a report JSON as a text table");
    std::string report_in;
    report_cmd->add_option("--in", report_in, "report JSON path")->required();

    // --- sensitivity ---
    auto* sens_cmd =
        app.add_subcommand("sensitivity", "weight-perturbation study on sky visibility");
    std::vector<std::string> sens_scenes;
    std::string sens_parent, sens_config, sens_out;
    uint64_t sens_seed = 0;
    int sens_questions = 30;
    int sens_threads = 1;
    sens_cmd->add_option("--scene", sens_scenes, "scene directory (repeatable)");
    sens_cmd->add_option("--scenes", sens_parent, "parent directory of scene subdirectories");
    sens_cmd->add_option("--config", sens_config, "key=value config file");
    sens_cmd->add_option("--out", sens_out, "output JSON path")->required();
    auto* sens_seed_opt = sens_cmd->add_option("--seed", sens_seed, "generation seed");
    sens_cmd->add_option("--questions", sens_questions, "number of sampled questions");
    sens_cmd->add_option("--threads", sens_threads, "worker threads for SVF preparation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*svf_cmd) {
            Raster dsm = load_grid(svf_dsm, RasterKind::Elevation);
            Raster out = svf_raster(dsm, svf_params, svf_threads);
            save_grid(out, svf_out);
            write_manifest(svf_out, "svf", "", {svf_dsm}, 0);
            std::cout << "svf: " << out.width << "x" << out.height << " raster -> " << svf_out
                      << "\n";
        } else if (*stats_cmd) {
            SceneContext scene = prepare_scene(load_scene_dir(stats_scene), {}, stats_threads);
            SceneStatistics st = scene_statistics(scene);
            write_text_file(stats_out, scene_statistics_json(st));
            write_manifest(stats_out, "stats", "", {stats_scene}, 0);
            std::cout << "stats: scene " << st.scene_id << " -> " << stats_out << "\n";
        } else if (*gen_cmd) {
            GenConfig cfg;
            if (!gen_config.empty()) apply_config_file(gen_config, cfg);
            if (gen_seed_opt->count()) cfg.seed = gen_seed;
            if (gen_count >= 0) cfg.per_category_count = gen_count;
            auto dirs = collect_scene_dirs(gen_scenes, gen_parent);
            auto scenes = load_and_prepare(dirs, gen_threads);
            GenBatchResult batch = gen_batch(scenes, cfg);
            emit_jsonl(batch.items, gen_out);
            write_text_file(gen_out + ".audit.json",
                            balance_report_json(audit_balance(batch.items)));
            write_manifest(gen_out, "gen", gen_config, dirs, cfg.seed);
            for (const auto& [cat, n] : batch.per_category_counts)
                std::cout << cat << ": " << n << "\n";
            for (const auto& w : batch.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "gen: " << batch.items.size() << " items -> " << gen_out << "\n";
        } else if (*score_cmd) {
            auto items = load_items_jsonl(score_items);
            auto responses = load_responses_jsonl(score_responses);
            ScoringRun run = score_all(items, responses);
            CategoryReport report = aggregate(run.records, items);
            report.unmatched_response_ids = run.unmatched_response_ids;
            report.missing_response_ids = run.missing_response_ids;
            write_text_file(score_out, report_json(report));
            write_manifest(score_out, "score", "", {score_items, score_responses}, 0);
            std::cout << report_table(report);
            if (!run.unmatched_response_ids.empty())
                std::cerr << "warning: " << run.unmatched_response_ids.size()
                          << " response ids had no matching item\n";
        } else if (*report_cmd) {
            std::ifstream in(report_in);
            if (!in) throw IoError("cannot open report file: " + report_in);
            std::stringstream ss;
            ss << in.rdbuf();
            std::cout << report_table(report_from_json(ss.str()));
        } else if (*sens_cmd) {
            GenConfig cfg;
            if (!sens_config.empty()) apply_config_file(sens_config, cfg);
            if (sens_seed_opt->count()) cfg.seed = sens_seed;
            auto dirs = collect_scene_dirs(sens_scenes, sens_parent);
            auto scenes = load_and_prepare(dirs, sens_threads);
            SensitivityReport rep = run_sensitivity(scenes, cfg, sens_questions);
            if (rep.n_questions < sens_questions)
                std::cerr << "warning: only " << rep.n_questions << " of " << sens_questions
                          << " questions were feasible on these scenes\n";
            write_text_file(sens_out, sensitivity_report_json(rep));
            write_manifest(sens_out, "sensitivity", sens_config, dirs, cfg.seed);
            for (const auto& e : rep.entries) {
                std::cout << e.coefficient;
                if (e.coefficient != "control")
                    std::cout << (e.delta > 0 ? " +" : " ") << e.delta;
                std::cout << ": top-1 change rate " << 100.0 * e.change_rate << "% ("
                          << e.changed << "/" << rep.n_questions << ")\n";
            }
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
