#pragma once

#include <cmath>
#include <cstdint>

#include "scbct/volume.hpp"

namespace scbct {

/// Grid whose physical center sits at the origin (the isocenter).
inline Grid3 centered_grid(std::array<int, 3> dims, std::array<double, 3> spacing) {
    Grid3 g;
    g.dims = dims;
    g.spacing = spacing;
    for (int a = 0; a < 3; ++a) g.origin[a] = -0.5 * (dims[a] - 1) * spacing[a];
    g.validate();
    return g;
}

inline Grid3 centered_cube_grid(int n, double spacing) {
    return centered_grid({n, n, n}, {spacing, spacing, spacing});
}

/// Piecewise-constant test object: an elliptical body with low-density lungs,
/// a bony spine block, soft-tissue inserts and a small tube (the structure the
/// companion mask marks). Values in [0, 0.9].
inline Volume3 desk_phantom(const Grid3& grid) {
    Volume3 out = Volume3::zeros(grid);
    const auto c = grid.physical_center();
    const double rx = 0.42 * grid.dims[0] * grid.spacing[0];
    const double ry = 0.34 * grid.dims[1] * grid.spacing[1];
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i) {
                const auto p = grid.voxel_center(i, j, k);
                const double x = p[0] - c[0], y = p[1] - c[1], z = p[2] - c[2];
                float v = 0.0f;
                if ((x / rx) * (x / rx) + (y / ry) * (y / ry) <= 1.0) {
                    v = 0.30f;
                    const double lx = 0.45 * rx, ly = 0.55 * ry;
                    const double dxl = (x + 0.48 * rx) / lx, dxr = (x - 0.48 * rx) / lx;
                    const double dy = (y + 0.10 * ry) / ly;
                    if (dxl * dxl + dy * dy <= 1.0 || dxr * dxr + dy * dy <= 1.0) v = 0.10f;
                    if (std::abs(x) <= 0.16 * rx && y >= 0.45 * ry && y <= 0.85 * ry)
                        v = 0.90f;  // spine
                    const double sx = x - 0.05 * rx, sy = y + 0.55 * ry;
                    if (sx * sx + sy * sy + z * z <= 0.03 * rx * rx) v = 0.55f;
                    const double tx = x + 0.04 * rx, ty = y - 0.30 * ry;
                    if (tx * tx + ty * ty <= 0.012 * rx * rx) v = 0.42f;  // tube
                }
                out.values[grid.index(i, j, k)] = v;
            }
    return out;
}

/// Mask of the small tube insert of desk_phantom on the same grid.
inline Mask3 desk_phantom_tube_mask(const Grid3& grid) {
    Mask3 out = Mask3::zeros(grid);
    const auto c = grid.physical_center();
    const double rx = 0.42 * grid.dims[0] * grid.spacing[0];
    const double ry = 0.34 * grid.dims[1] * grid.spacing[1];
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i) {
                const auto p = grid.voxel_center(i, j, k);
                const double tx = p[0] - c[0] + 0.04 * rx;
                const double ty = p[1] - c[1] - 0.30 * ry;
                if (tx * tx + ty * ty <= 0.012 * rx * rx)
                    out.values[grid.index(i, j, k)] = 1;
            }
    return out;
}

/// Adds slice-uniform linear streaks through the axial plane, Gaussian profile
/// across each line, alternating sign. Deterministic in the seed.
inline Volume3 add_streaks(const Volume3& vol, int n_streaks, double amplitude,
                           std::uint64_t seed) {
    if (n_streaks < 0) throw std::invalid_argument("add_streaks: n_streaks must be >= 0");
    vol.validate();
    Volume3 out = vol;
    const auto& g = vol.grid;
    const auto c = g.physical_center();
    const double rmax = 0.35 * std::min(g.dims[0] * g.spacing[0], g.dims[1] * g.spacing[1]);
    GaussianRng rng(seed);
    for (int s = 0; s < n_streaks; ++s) {
        const double phi = 2.0 * M_PI * rng.uniform();
        const double rho = (2.0 * rng.uniform() - 1.0) * rmax;
        const double width = 1.0 + 2.0 * rng.uniform();  // mm
        const double amp = (s % 2 ? -amplitude : amplitude) * (0.5 + rng.uniform());
        const double nx = -std::sin(phi), ny = std::cos(phi);
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i) {
                    const auto p = g.voxel_center(i, j, k);
                    const double d = (p[0] - c[0]) * nx + (p[1] - c[1]) * ny - rho;
                    const double fall = std::exp(-(d * d) / (width * width));
                    if (fall > 1e-4)
                        out.values[g.index(i, j, k)] += static_cast<float>(amp * fall);
                }
    }
    return out;
}

}  // namespace scbct
