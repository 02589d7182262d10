#include "skybench/raster.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace skybench {

namespace {

// Shortest round-trip decimal rendering so that save/load is bit-exact.
std::string format_value(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view tok, const std::string& path) {
    double out = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ValidationError(path + ": bad numeric value '" + std::string(tok) + "'");
    return out;
}

long parse_long(std::string_view tok, const std::string& path) {
    long out = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ValidationError(path + ": bad integer value '" + std::string(tok) + "'");
    return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

// Reads one header line of the form "<key> <value...>".
std::string header_field(std::istream& in, const std::string& key, const std::string& path) {
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError(path + ": truncated header, expected '" + key + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto sp = line.find(' ');
    if (sp == std::string::npos || line.substr(0, sp) != key)
        throw ValidationError(path + ": malformed header line '" + line + "', expected '" + key + "'");
    return line.substr(sp + 1);
}

struct GridHeader {
    int width;
    int height;
    double cellsize;
    std::string kind;
};

GridHeader read_header(std::istream& in, const std::string& path) {
    GridHeader h;
    long w = parse_long(header_field(in, "ncols", path), path);
    long hgt = parse_long(header_field(in, "nrows", path), path);
    h.cellsize = parse_double(header_field(in, "cellsize", path), path);
    h.kind = header_field(in, "kind", path);
    if (w <= 0 || hgt <= 0)
        throw ValidationError(path + ": non-positive grid dimensions");
    if (h.cellsize <= 0)
        throw ValidationError(path + ": non-positive cellsize");
    h.width = static_cast<int>(w);
    h.height = static_cast<int>(hgt);
    return h;
}

}  // namespace

std::string to_string(RasterKind kind) {
    switch (kind) {
        case RasterKind::Elevation: return "elevation";
        case RasterKind::Svf: return "svf";
        case RasterKind::Brightness: return "brightness";
    }
    return "elevation";
}

RasterKind raster_kind_from_string(const std::string& s) {
    if (s == "elevation") return RasterKind::Elevation;
    if (s == "svf") return RasterKind::Svf;
    if (s == "brightness") return RasterKind::Brightness;
    throw ValidationError("unknown raster kind '" + s + "'");
}

void Raster::validate() const {
    if (width <= 0 || height <= 0)
        throw ValidationError("raster dimensions must be positive");
    if (values.size() != static_cast<size_t>(width) * static_cast<size_t>(height))
        throw ValidationError("raster value count does not match dimensions");
    if (resolution <= 0)
        throw ValidationError("raster resolution must be positive");
    for (double v : values) {
        if (!std::isfinite(v))
            throw ValidationError("raster contains non-finite values");
        if (kind == RasterKind::Svf && (v < 0.0 || v > 1.0))
            throw ValidationError("svf raster value outside [0,1]");
    }
}

const std::vector<std::string>& landcover_vocabulary() {
    static const std::vector<std::string> vocab = {
        "residential", "agricultural", "forest", "grassland", "railways",
        "roads",       "bare_soil",    "buildings", "water",  "other"};
    return vocab;
}

int landcover_id(const std::string& label) {
    const auto& vocab = landcover_vocabulary();
    for (size_t i = 0; i < vocab.size(); ++i)
        if (vocab[i] == label) return static_cast<int>(i);
    throw ValidationError("unknown land-cover label '" + label + "'");
}

void SegRaster::validate() const {
    if (width <= 0 || height <= 0)
        throw ValidationError("segmentation dimensions must be positive");
    if (classes.size() != static_cast<size_t>(width) * static_cast<size_t>(height))
        throw ValidationError("segmentation class count does not match dimensions");
    const auto n = landcover_vocabulary().size();
    for (uint8_t c : classes)
        if (c >= n) throw ValidationError("segmentation class id out of vocabulary range");
}

void RegionPct::validate() const {
    if (!(xmin < xmax) || !(ymin < ymax))
        throw ValidationError("degenerate region: require xmin < xmax and ymin < ymax");
    if (xmin < 0 || ymin < 0 || xmax > 100 || ymax > 100)
        throw ValidationError("region percentages must lie in [0,100]");
}

void SceneBundle::validate() const {
    dsm.validate();
    seg.validate();
    if (seg.width != dsm.width || seg.height != dsm.height)
        throw ValidationError("scene '" + scene_id + "': seg dimensions differ from dsm");
    if (svf) {
        svf->validate();
        if (svf->width != dsm.width || svf->height != dsm.height)
            throw ValidationError("scene '" + scene_id + "': svf dimensions differ from dsm");
    }
    if (brightness) {
        brightness->validate();
        if (brightness->width != dsm.width || brightness->height != dsm.height)
            throw ValidationError("scene '" + scene_id + "': brightness dimensions differ from dsm");
    }
}

Raster load_grid(const std::string& path, RasterKind expected_kind) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grid file: " + path);
    GridHeader h = read_header(in, path);
    RasterKind kind = raster_kind_from_string(h.kind);
    if (kind != expected_kind)
        throw ValidationError(path + ": kind '" + h.kind + "' does not match expected '" +
                              to_string(expected_kind) + "'");

    Raster r(h.width, h.height, h.cellsize, kind);
    std::string line;
    for (int y = 0; y < h.height; ++y) {
        if (!std::getline(in, line))
            throw ValidationError(path + ": truncated body, expected " +
                                  std::to_string(h.height) + " rows");
        auto toks = split_ws(line);
        if (static_cast<int>(toks.size()) != h.width)
            throw ValidationError(path + ": row " + std::to_string(y) + " has " +
                                  std::to_string(toks.size()) + " values, expected " +
                                  std::to_string(h.width));
        for (int x = 0; x < h.width; ++x)
            r.at(x, y) = parse_double(toks[x], path);
    }
    r.validate();
    return r;
}

void save_grid(const Raster& raster, const std::string& path) {
    raster.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open grid file for writing: " + path);
    out << "ncols " << raster.width << "\n";
    out << "nrows " << raster.height << "\n";
    out << "cellsize " << format_value(raster.resolution) << "\n";
    out << "kind " << to_string(raster.kind) << "\n";
    for (int y = 0; y < raster.height; ++y) {
        for (int x = 0; x < raster.width; ++x) {
            if (x) out << ' ';
            out << format_value(raster.at(x, y));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

SegRaster load_seg(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open segmentation file: " + path);
    GridHeader h = read_header(in, path);
    if (h.kind != "seg")
        throw ValidationError(path + ": kind '" + h.kind + "' does not match expected 'seg'");
    std::string labels = header_field(in, "labels", path);

    // The vocabulary is fixed; external id schemes must be remapped upstream.
    std::string canon;
    for (const auto& l : landcover_vocabulary()) {
        if (!canon.empty()) canon += ',';
        canon += l;
    }
    if (labels != canon)
        throw ValidationError(path + ": labels line does not match the canonical vocabulary");

    SegRaster s(h.width, h.height);
    std::string line;
    for (int y = 0; y < h.height; ++y) {
        if (!std::getline(in, line))
            throw ValidationError(path + ": truncated body, expected " +
                                  std::to_string(h.height) + " rows");
        auto toks = split_ws(line);
        if (static_cast<int>(toks.size()) != h.width)
            throw ValidationError(path + ": row " + std::to_string(y) + " has " +
                                  std::to_string(toks.size()) + " values, expected " +
                                  std::to_string(h.width));
        for (int x = 0; x < h.width; ++x) {
            long id = parse_long(toks[x], path);
            if (id < 0 || id >= static_cast<long>(landcover_vocabulary().size()))
                throw ValidationError(path + ": class id " + std::to_string(id) +
                                      " out of vocabulary range");
            s.at(x, y) = static_cast<uint8_t>(id);
        }
    }
    return s;
}

void save_seg(const SegRaster& seg, const std::string& path) {
    seg.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open segmentation file for writing: " + path);
    out << "ncols " << seg.width << "\n";
    out << "nrows " << seg.height << "\n";
    out << "cellsize 1\n";
    out << "kind seg\n";
    out << "labels ";
    const auto& vocab = landcover_vocabulary();
    for (size_t i = 0; i < vocab.size(); ++i) {
        if (i) out << ',';
        out << vocab[i];
    }
    out << "\n";
    for (int y = 0; y < seg.height; ++y) {
        for (int x = 0; x < seg.width; ++x) {
            if (x) out << ' ';
            out << static_cast<int>(seg.at(x, y));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

PixelRect region_to_pixels(const RegionPct& region, int width, int height) {
    region.validate();
    PixelRect r;
    r.x0 = static_cast<int>(std::floor(region.xmin / 100.0 * width));
    r.y0 = static_cast<int>(std::floor(region.ymin / 100.0 * height));
    r.x1 = static_cast<int>(std::ceil(region.xmax / 100.0 * width));
    r.y1 = static_cast<int>(std::ceil(region.ymax / 100.0 * height));
    r.x0 = std::clamp(r.x0, 0, width - 1);
    r.y0 = std::clamp(r.y0, 0, height - 1);
    r.x1 = std::clamp(r.x1, r.x0 + 1, width);
    r.y1 = std::clamp(r.y1, r.y0 + 1, height);
    return r;
}

PixelCoord point_to_pixel(const PointPct& point, int width, int height) {
    PixelCoord c;
    c.x = static_cast<int>(std::floor(point.x / 100.0 * width));
    c.y = static_cast<int>(std::floor(point.y / 100.0 * height));
    c.x = std::clamp(c.x, 0, width - 1);
    c.y = std::clamp(c.y, 0, height - 1);
    return c;
}

RegionStats rect_stats(const Raster& raster, const PixelRect& rect) {
    if (rect.pixel_count() < 1) throw ValidationError("empty pixel rect");
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(rect.pixel_count()));
    for (int y = rect.y0; y < rect.y1; ++y)
        for (int x = rect.x0; x < rect.x1; ++x)
            vals.push_back(raster.at(x, y));

    RegionStats s;
    s.pixel_count = static_cast<long long>(vals.size());
    double sum = 0;
    for (double v : vals) sum += v;
    s.mean = sum / vals.size();
    double sq = 0;
    for (double v : vals) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / vals.size());

    std::sort(vals.begin(), vals.end());
    s.min = vals.front();
    s.max = vals.back();
    auto quantile = [&](double q) {
        double pos = q * (vals.size() - 1);
        size_t i = static_cast<size_t>(pos);
        if (i + 1 >= vals.size()) return vals.back();
        double frac = pos - i;
        return vals[i] + frac * (vals[i + 1] - vals[i]);
    };
    s.q1 = quantile(0.25);
    s.median = quantile(0.50);
    s.q3 = quantile(0.75);
    return s;
}

RegionStats region_stats(const Raster& raster, const RegionPct& region) {
    return rect_stats(raster, region_to_pixels(region, raster.width, raster.height));
}

double rect_class_ratio(const SegRaster& seg, const PixelRect& rect,
                        const std::vector<std::string>& labels) {
    if (rect.pixel_count() < 1) throw ValidationError("empty pixel rect");
    bool wanted[16] = {};
    for (const auto& l : labels) wanted[landcover_id(l)] = true;
    long long hits = 0;
    for (int y = rect.y0; y < rect.y1; ++y)
        for (int x = rect.x0; x < rect.x1; ++x)
            if (wanted[seg.at(x, y)]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(rect.pixel_count());
}

double class_ratio(const SegRaster& seg, const RegionPct& region,
                   const std::vector<std::string>& labels) {
    return rect_class_ratio(seg, region_to_pixels(region, seg.width, seg.height), labels);
}

Raster edge_map(const Raster& brightness) {
    if (brightness.width < 3 || brightness.height < 3)
        throw ValidationError("edge_map requires a raster of at least 3x3");
    Raster out(brightness.width, brightness.height, brightness.resolution,
               RasterKind::Brightness);
    auto sample = [&](int x, int y) {
        x = std::clamp(x, 0, brightness.width - 1);
        y = std::clamp(y, 0, brightness.height - 1);
        return brightness.at(x, y);
    };
    for (int y = 0; y < brightness.height; ++y) {
        for (int x = 0; x < brightness.width; ++x) {
            double gx = -sample(x - 1, y - 1) + sample(x + 1, y - 1)
                      - 2 * sample(x - 1, y) + 2 * sample(x + 1, y)
                      - sample(x - 1, y + 1) + sample(x + 1, y + 1);
            double gy = -sample(x - 1, y - 1) - 2 * sample(x, y - 1) - sample(x + 1, y - 1)
                      + sample(x - 1, y + 1) + 2 * sample(x, y + 1) + sample(x + 1, y + 1);
            out.at(x, y) = std::sqrt(gx * gx + gy * gy);
        }
    }
    return out;
}

Raster brightness_default(const SegRaster& seg) {
    return Raster(seg.width, seg.height, 1.0, RasterKind::Brightness, 0.5);
}

}  // namespace skybench
