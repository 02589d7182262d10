#pragma once

// Grid data model shared by every other component: scalar rasters (elevation,
// sky-view-factor, brightness), land-cover class rasters, percent-based
// spatial selectors, windowed statistics and Sobel edge extraction.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace skybench {

// Thrown when file contents or arguments violate a documented contract.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a file cannot be opened, read or written.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class RasterKind { Elevation, Svf, Brightness };

std::string to_string(RasterKind kind);
RasterKind raster_kind_from_string(const std::string& s);

/// Row-major scalar grid. Immutable after construction by convention; all
/// operations on rasters are pure functions.
struct Raster {
    int width = 0;
    int height = 0;
    double resolution = 1.0;  // meters per pixel
    RasterKind kind = RasterKind::Elevation;
    std::vector<double> values;  // size width*height, row-major, y*width+x

    Raster() = default;
    Raster(int w, int h, double res, RasterKind k, double fill = 0.0)
        : width(w), height(h), resolution(res), kind(k),
          values(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {}

    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
    double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    // Enforces the per-kind value constraints; throws ValidationError.
    void validate() const;
};

// The fixed land-cover vocabulary, in canonical order. Class ids index into
// this list; importers of external data must map their ids onto it explicitly.
const std::vector<std::string>& landcover_vocabulary();
int landcover_id(const std::string& label);  // throws ValidationError on unknown label

/// Land-cover class grid over the fixed 10-label vocabulary.
struct SegRaster {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> classes;  // row-major class ids

    SegRaster() = default;
    SegRaster(int w, int h, uint8_t fill = 0)
        : width(w), height(h),
          classes(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {}

    uint8_t at(int x, int y) const { return classes[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int x, int y) { return classes[static_cast<size_t>(y) * width + x]; }

    void validate() const;
};

/// Rectangular selector in percent of image dimensions, origin top-left.
struct RegionPct {
    double xmin = 0, ymin = 0, xmax = 0, ymax = 0;
    void validate() const;
};

/// Point selector in percent of image dimensions; (0,0) is the top-left pixel,
/// x horizontal, y vertical.
struct PointPct {
    double x = 0, y = 0;
};

/// Half-open pixel rectangle [x0,x1) x [y0,y1).
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long long pixel_count() const { return 1LL * width() * height(); }
};

struct PixelCoord {
    int x = 0, y = 0;
};

struct RegionStats {
    double mean = 0, stddev = 0, min = 0, max = 0;
    double q1 = 0, median = 0, q3 = 0;
    long long pixel_count = 0;
};

// ---------------------------------------------------------------------------
// Portable grid file format (plain text, bit-exact round trip):
//   ncols <w>
//   nrows <h>
//   cellsize <meters>
//   kind <elevation|svf|brightness>
//   <h rows of w space-separated decimal values>
// Segmentation grids use `kind seg` plus a fifth header line
//   labels <comma-separated vocabulary>
// and integer class ids in the body.
// ---------------------------------------------------------------------------

Raster load_grid(const std::string& path, RasterKind expected_kind);
void save_grid(const Raster& raster, const std::string& path);

SegRaster load_seg(const std::string& path);
void save_seg(const SegRaster& seg, const std::string& path);

// ---------------------------------------------------------------------------
// Coordinate conversion. Regions map to half-open rects via floor/ceil so
// adjacent regions never share pixels; results are clipped to grid bounds and
// are non-empty for any valid RegionPct on any grid of at least 1x1.
// ---------------------------------------------------------------------------

PixelRect region_to_pixels(const RegionPct& region, int width, int height);
PixelCoord point_to_pixel(const PointPct& point, int width, int height);

// Statistics over all pixels of the region's rect. Population standard
// deviation; quartiles by linear interpolation between order statistics.
RegionStats region_stats(const Raster& raster, const RegionPct& region);
RegionStats rect_stats(const Raster& raster, const PixelRect& rect);

// Fraction of region pixels whose class label is in `labels`, in [0,1].
double class_ratio(const SegRaster& seg, const RegionPct& region,
                   const std::vector<std::string>& labels);
double rect_class_ratio(const SegRaster& seg, const PixelRect& rect,
                        const std::vector<std::string>& labels);

// Per-pixel gradient magnitude via the 3x3 Sobel operator, replicated edges.
// Output kind is brightness. Throws on rasters smaller than 3x3.
Raster edge_map(const Raster& brightness);

// Constant 0.5 brightness raster matching the segmentation dimensions; the
// fallback when no optical imagery is supplied.
Raster brightness_default(const SegRaster& seg);

/// One scene's aligned rasters. svf and brightness are optional on disk and
/// derivable (svf from the dsm, brightness from the default).
struct SceneBundle {
    std::string scene_id;
    Raster dsm;
    SegRaster seg;
    std::optional<Raster> svf;
    std::optional<Raster> brightness;

    void validate() const;  // all present rasters share width/height
};

}  // namespace skybench
