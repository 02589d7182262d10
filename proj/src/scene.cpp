#include "skybench/scene.hpp"

#include <algorithm>
#include <filesystem>

namespace skybench {

namespace fs = std::filesystem;

SceneBundle load_scene_dir(const std::string& dir) {
    fs::path root(dir);
    if (!fs::is_directory(root)) throw IoError("scene directory not found: " + dir);

    SceneBundle b;
    b.scene_id = root.filename().string();
    if (b.scene_id.empty()) b.scene_id = root.parent_path().filename().string();

    const fs::path dsm_path = root / "dsm.grid";
    const fs::path seg_path = root / "seg.grid";
    if (!fs::exists(dsm_path)) throw IoError("missing dsm.grid in scene: " + dir);
    if (!fs::exists(seg_path)) throw IoError("missing seg.grid in scene: " + dir);
    b.dsm = load_grid(dsm_path.string(), RasterKind::Elevation);
    b.seg = load_seg(seg_path.string());

    const fs::path svf_path = root / "svf.grid";
    if (fs::exists(svf_path)) b.svf = load_grid(svf_path.string(), RasterKind::Svf);
    const fs::path bright_path = root / "brightness.grid";
    if (fs::exists(bright_path))
        b.brightness = load_grid(bright_path.string(), RasterKind::Brightness);

    b.validate();
    return b;
}

SceneContext prepare_scene(SceneBundle bundle, const SvfParams& svf_params, int threads) {
    bundle.validate();
    SceneContext ctx;
    if (!bundle.svf) bundle.svf = svf_raster(bundle.dsm, svf_params, threads);
    if (!bundle.brightness) bundle.brightness = brightness_default(bundle.seg);
    ctx.edges = edge_map(*bundle.brightness);
    ctx.edge_p75 = raster_quantile(ctx.edges, 0.75);
    ctx.edge_p99 = raster_quantile(ctx.edges, 0.99);
    ctx.bundle = std::move(bundle);
    return ctx;
}

double raster_quantile(const Raster& raster, double q) {
    std::vector<double> vals(raster.values);
    std::sort(vals.begin(), vals.end());
    if (vals.empty()) throw ValidationError("quantile of empty raster");
    double pos = std::clamp(q, 0.0, 1.0) * (vals.size() - 1);
    size_t i = static_cast<size_t>(pos);
    if (i + 1 >= vals.size()) return vals.back();
    return vals[i] + (pos - i) * (vals[i + 1] - vals[i]);
}

}  // namespace skybench
