#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "scbct/metaimage.hpp"
#include "scbct/volume.hpp"

namespace scbct {

/// Circular-trajectory cone-beam scanner. The source orbits the isocenter in
/// the z = 0 plane at radius dso; the flat detector sits dsd from the source,
/// perpendicular to the source-isocenter ray, columns along the in-plane
/// tangent u and rows along z. center_offset shifts the detector by (du, dv) mm.
struct ConeBeamGeometry {
    double dsd = 1500.0;  // source-to-detector, mm
    double dso = 1000.0;  // source-to-isocenter, mm
    int det_rows = 512;
    int det_cols = 512;
    std::array<double, 2> pixel_size{1.0, 1.0};     // (pu, pv) mm
    std::array<double, 2> center_offset{0.0, 0.0};  // (du, dv) mm
    std::vector<double> angles;                     // radians

    int n_views() const { return static_cast<int>(angles.size()); }

    void validate() const {
        if (!(dsd > dso) || !(dso > 0.0))
            throw std::invalid_argument("ConeBeamGeometry: requires dsd > dso > 0");
        if (det_rows < 1 || det_cols < 1)
            throw std::invalid_argument("ConeBeamGeometry: detector counts must be >= 1");
        if (!(pixel_size[0] > 0.0) || !(pixel_size[1] > 0.0))
            throw std::invalid_argument("ConeBeamGeometry: pixel sizes must be > 0");
        if (angles.empty())
            throw std::invalid_argument("ConeBeamGeometry: angles must be non-empty");
    }
};

inline std::vector<double> uniform_angles(int n_views) {
    if (n_views < 1) throw std::invalid_argument("uniform_angles: n_views must be >= 1");
    std::vector<double> a(n_views);
    for (int i = 0; i < n_views; ++i)
        a[i] = 2.0 * std::numbers::pi * i / n_views;
    return a;
}

/// Clinical acquisition defaults: 512x512 detector of 1 mm pixels, dsd 1500,
/// dso 1000, offset-detector half-fan (-160, 0), 500 views over 360 degrees.
inline ConeBeamGeometry clinical_geometry() {
    ConeBeamGeometry g;
    g.center_offset = {-160.0, 0.0};
    g.angles = uniform_angles(500);
    return g;
}

/// Reduced geometry for tests and CI: 128x128 detector of 2 mm pixels,
/// centered, 90 views.
inline ConeBeamGeometry desk_geometry(int n_views = 90) {
    ConeBeamGeometry g;
    g.det_rows = 128;
    g.det_cols = 128;
    g.pixel_size = {2.0, 2.0};
    g.center_offset = {0.0, 0.0};
    g.angles = uniform_angles(n_views);
    return g;
}

/// Stack of 2D line-integral images, one per view angle; (view, row, col)
/// with col fastest.
struct ProjectionSet {
    ConeBeamGeometry geometry;
    std::vector<float> data;

    std::size_t pixels_per_view() const {
        return static_cast<std::size_t>(geometry.det_rows) * geometry.det_cols;
    }
    std::size_t index(int view, int row, int col) const {
        return (static_cast<std::size_t>(view) * geometry.det_rows + row) *
                   geometry.det_cols +
               col;
    }
    std::span<float> view(int v) {
        return {data.data() + v * pixels_per_view(), pixels_per_view()};
    }
    std::span<const float> view(int v) const {
        return {data.data() + v * pixels_per_view(), pixels_per_view()};
    }
    static ProjectionSet zeros(const ConeBeamGeometry& g) {
        g.validate();
        ProjectionSet p;
        p.geometry = g;
        p.data.assign(static_cast<std::size_t>(g.n_views()) * g.det_rows * g.det_cols, 0.0f);
        return p;
    }
    void validate() const {
        geometry.validate();
        if (data.size() != static_cast<std::size_t>(geometry.n_views()) * pixels_per_view())
            throw std::invalid_argument("ProjectionSet: data length mismatch");
        for (float v : data)
            if (!std::isfinite(v)) throw std::invalid_argument("ProjectionSet: non-finite value");
    }
};

inline ProjectionSet add_gaussian_noise(const ProjectionSet& p, double sigma,
                                        std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: negative sigma");
    if (sigma == 0.0) return p;
    ProjectionSet out = p;
    GaussianRng rng(seed);
    for (auto& x : out.data) x = static_cast<float>(x + sigma * rng.normal());
    return out;
}

/// Projections reuse the MetaImage layout with DimSize = cols rows n_views;
/// the geometry itself travels in the pipeline manifest.
inline void write_projections(const ProjectionSet& p, const std::filesystem::path& path) {
    p.validate();
    Volume3 as_vol;
    as_vol.grid.dims = {p.geometry.det_cols, p.geometry.det_rows, p.geometry.n_views()};
    as_vol.grid.spacing = {p.geometry.pixel_size[0], p.geometry.pixel_size[1], 1.0};
    as_vol.grid.origin = {0.0, 0.0, 0.0};
    as_vol.values = p.data;
    write_metaimage(as_vol, path);
}

inline ProjectionSet read_projections(const std::filesystem::path& path,
                                      const ConeBeamGeometry& geom) {
    geom.validate();
    const Volume3 as_vol = read_volume(path);
    if (as_vol.grid.dims[0] != geom.det_cols || as_vol.grid.dims[1] != geom.det_rows ||
        as_vol.grid.dims[2] != geom.n_views())
        throw std::runtime_error("read_projections: file shape does not match geometry");
    ProjectionSet p;
    p.geometry = geom;
    p.data = as_vol.values;
    return p;
}

}  // namespace scbct
