#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "scbct/geometry.hpp"
#include "scbct/volume.hpp"

namespace scbct {

// Ray-driven cone-beam projector with trilinear sampling at a fixed step, and
// its exact adjoint. Both operators walk the same sample positions with the
// same weights, so <Ax, y> == <x, At y> up to float rounding.
//
// The volume's physical center sits on the isocenter; rays are clipped to the
// support of the zero-padded trilinear field (one voxel beyond the border
// centers). Sample m lies at t = tmin + (m + 0.5) * step with weight step; the
// leftover sub-step tail is integrated with one midpoint sample of weight equal
// to the tail length, which keeps the quadrature exact on linear segments.

inline double default_step_mm(const Grid3& grid) {
    return 0.5 * std::min({grid.spacing[0], grid.spacing[1], grid.spacing[2]});
}

namespace detail {

struct ViewBasis {
    std::array<double, 3> src;
    std::array<double, 3> axis;  // unit vector source -> isocenter
    std::array<double, 3> eu;    // detector column direction
    // detector row direction is +z
};

inline ViewBasis view_basis(const ConeBeamGeometry& g, int view) {
    const double c = std::cos(g.angles[view]);
    const double s = std::sin(g.angles[view]);
    return ViewBasis{{g.dso * c, g.dso * s, 0.0}, {-c, -s, 0.0}, {-s, c, 0.0}};
}

// Detector pixel center in world coordinates.
inline std::array<double, 3> pixel_position(const ConeBeamGeometry& g, const ViewBasis& b,
                                            int row, int col) {
    const double u = (col - 0.5 * (g.det_cols - 1)) * g.pixel_size[0] + g.center_offset[0];
    const double v = (row - 0.5 * (g.det_rows - 1)) * g.pixel_size[1] + g.center_offset[1];
    return {b.src[0] + g.dsd * b.axis[0] + u * b.eu[0],
            b.src[1] + g.dsd * b.axis[1] + u * b.eu[1],
            b.src[2] + v};
}

// Walks one source->pixel ray through the padded volume support, invoking
// fn(qx, qy, qz, weight) at every sample in index coordinates.
template <typename Fn>
inline void march_ray(const Grid3& grid, const std::array<double, 3>& src,
                      const std::array<double, 3>& pix, double step, Fn&& fn) {
    std::array<double, 3> dir{pix[0] - src[0], pix[1] - src[1], pix[2] - src[2]};
    const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    const double inv_len = 1.0 / len;
    for (double& d : dir) d *= inv_len;

    double tmin = 0.0, tmax = len;
    for (int a = 0; a < 3; ++a) {
        const double half = 0.5 * (grid.dims[a] + 1) * grid.spacing[a];
        if (std::abs(dir[a]) < 1e-12) {
            if (src[a] < -half || src[a] > half) return;
        } else {
            const double t0 = (-half - src[a]) / dir[a];
            const double t1 = (half - src[a]) / dir[a];
            tmin = std::max(tmin, std::min(t0, t1));
            tmax = std::min(tmax, std::max(t0, t1));
        }
    }
    if (tmax <= tmin) return;

    std::array<double, 3> inv_sp, c0;
    for (int a = 0; a < 3; ++a) {
        inv_sp[a] = 1.0 / grid.spacing[a];
        c0[a] = -0.5 * (grid.dims[a] - 1) * grid.spacing[a];
    }
    const double span = tmax - tmin;
    const std::int64_t m = static_cast<std::int64_t>(std::floor(span / step));
    std::array<double, 3> q, dq;
    for (int a = 0; a < 3; ++a) {
        q[a] = (src[a] + (tmin + 0.5 * step) * dir[a] - c0[a]) * inv_sp[a];
        dq[a] = step * dir[a] * inv_sp[a];
    }
    for (std::int64_t i = 0; i < m; ++i) {
        fn(q[0], q[1], q[2], step);
        q[0] += dq[0];
        q[1] += dq[1];
        q[2] += dq[2];
    }
    const double tail = span - m * step;
    if (tail > 1e-9 * step) {
        const double tc = tmin + m * step + 0.5 * tail;
        fn((src[0] + tc * dir[0] - c0[0]) * inv_sp[0],
           (src[1] + tc * dir[1] - c0[1]) * inv_sp[1],
           (src[2] + tc * dir[2] - c0[2]) * inv_sp[2], tail);
    }
}

inline double sample_at(const float* data, const std::array<int, 3>& dims, double x,
                        double y, double z) {
    const double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
    const int i0 = static_cast<int>(fx), j0 = static_cast<int>(fy), k0 = static_cast<int>(fz);
    const double ax = x - fx, ay = y - fy, az = z - fz;
    if (i0 >= 0 && j0 >= 0 && k0 >= 0 && i0 < dims[0] - 1 && j0 < dims[1] - 1 &&
        k0 < dims[2] - 1) {
        // interior fast path
        const std::size_t sy = dims[0];
        const std::size_t sz = static_cast<std::size_t>(dims[0]) * dims[1];
        const float* p = data + i0 + j0 * sy + k0 * sz;
        const double c00 = p[0] + ax * (p[1] - p[0]);
        const double c10 = p[sy] + ax * (p[sy + 1] - p[sy]);
        const double c01 = p[sz] + ax * (p[sz + 1] - p[sz]);
        const double c11 = p[sz + sy] + ax * (p[sz + sy + 1] - p[sz + sy]);
        const double c0 = c00 + ay * (c10 - c00);
        const double c1 = c01 + ay * (c11 - c01);
        return c0 + az * (c1 - c0);
    }
    return tri_sample(data, dims, x, y, z);
}

inline void scatter_at(float* data, const std::array<int, 3>& dims, double x, double y,
                       double z, double value) {
    const double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
    const int i0 = static_cast<int>(fx), j0 = static_cast<int>(fy), k0 = static_cast<int>(fz);
    if (i0 < -1 || i0 >= dims[0] || j0 < -1 || j0 >= dims[1] || k0 < -1 || k0 >= dims[2])
        return;
    const double ax = x - fx, ay = y - fy, az = z - fz;
    const std::size_t sy = dims[0];
    const std::size_t sz = static_cast<std::size_t>(dims[0]) * dims[1];
    for (int dk = 0; dk < 2; ++dk) {
        const int k = k0 + dk;
        if (k < 0 || k >= dims[2]) continue;
        const double wz = (dk ? az : 1.0 - az) * value;
        for (int dj = 0; dj < 2; ++dj) {
            const int j = j0 + dj;
            if (j < 0 || j >= dims[1]) continue;
            const double wyz = (dj ? ay : 1.0 - ay) * wz;
            for (int di = 0; di < 2; ++di) {
                const int i = i0 + di;
                if (i < 0 || i >= dims[0]) continue;
                data[i + j * sy + k * sz] +=
                    static_cast<float>((di ? ax : 1.0 - ax) * wyz);
            }
        }
    }
}

}  // namespace detail

/// Forward-projects the listed views into `out` (laid out in list order,
/// rows x cols per view). Parallel over detector rows; output is independent
/// of the worker count.
inline void forward_project_views(const Volume3& vol, const ConeBeamGeometry& geom,
                                  double step_mm, std::span<const int> views, float* out) {
    geom.validate();
    vol.grid.validate();
    if (!(step_mm > 0.0)) throw std::invalid_argument("forward_project: step must be > 0");
    const int rows = geom.det_rows, cols = geom.det_cols;
    const std::int64_t total_rows = static_cast<std::int64_t>(views.size()) * rows;
    const float* data = vol.values.data();
    const auto& dims = vol.grid.dims;
    parallel_for(0, total_rows, [&](std::int64_t vr) {
        const int vi = static_cast<int>(vr / rows);
        const int row = static_cast<int>(vr % rows);
        const auto basis = detail::view_basis(geom, views[vi]);
        float* line = out + (static_cast<std::size_t>(vi) * rows + row) * cols;
        for (int col = 0; col < cols; ++col) {
            const auto pix = detail::pixel_position(geom, basis, row, col);
            double acc = 0.0;
            detail::march_ray(vol.grid, basis.src, pix, step_mm,
                              [&](double x, double y, double z, double w) {
                                  acc += w * detail::sample_at(data, dims, x, y, z);
                              });
            line[col] = static_cast<float>(acc);
        }
    });
}

inline ProjectionSet forward_project(const Volume3& vol, const ConeBeamGeometry& geom,
                                     double step_mm) {
    ProjectionSet p = ProjectionSet::zeros(geom);
    std::vector<int> views(geom.n_views());
    for (int i = 0; i < geom.n_views(); ++i) views[i] = i;
    forward_project_views(vol, geom, step_mm, views, p.data.data());
    return p;
}

/// Adjoint of forward_project_views, accumulated into `accum`. Views are
/// scattered into per-view buffers (a fixed pool of 4, processed in parallel)
/// and reduced in view order, so the result is bitwise independent of the
/// worker count.
inline void back_project_views(const float* data, const ConeBeamGeometry& geom,
                               double step_mm, std::span<const int> views, Volume3& accum) {
    geom.validate();
    accum.grid.validate();
    if (!(step_mm > 0.0)) throw std::invalid_argument("back_project: step must be > 0");
    const int rows = geom.det_rows, cols = geom.det_cols;
    const std::size_t per_view = static_cast<std::size_t>(rows) * cols;
    const std::size_t nvox = accum.grid.voxel_count();
    constexpr int kBatch = 4;
    std::vector<std::vector<float>> buffers(kBatch);

    for (std::size_t first = 0; first < views.size(); first += kBatch) {
        const int batch = static_cast<int>(std::min<std::size_t>(kBatch, views.size() - first));
        parallel_for(0, batch, [&](std::int64_t b) {
            auto& buf = buffers[b];
            buf.assign(nvox, 0.0f);
            const int vi = static_cast<int>(first) + static_cast<int>(b);
            const auto basis = detail::view_basis(geom, views[vi]);
            const float* line = data + static_cast<std::size_t>(vi) * per_view;
            float* vb = buf.data();
            const auto& dims = accum.grid.dims;
            for (int row = 0; row < rows; ++row)
                for (int col = 0; col < cols; ++col) {
                    const double pv = line[row * cols + col];
                    if (pv == 0.0) continue;
                    const auto pix = detail::pixel_position(geom, basis, row, col);
                    detail::march_ray(accum.grid, basis.src, pix, step_mm,
                                      [&](double x, double y, double z, double w) {
                                          detail::scatter_at(vb, dims, x, y, z, w * pv);
                                      });
                }
        });
        for (int b = 0; b < batch; ++b) {
            const float* vb = buffers[b].data();
            for (std::size_t i = 0; i < nvox; ++i) accum.values[i] += vb[i];
        }
    }
}

inline Volume3 back_project(const ProjectionSet& proj, const Grid3& grid, double step_mm) {
    proj.validate();
    Volume3 out = Volume3::zeros(grid);
    std::vector<int> views(proj.geometry.n_views());
    for (int i = 0; i < proj.geometry.n_views(); ++i) views[i] = i;
    back_project_views(proj.data.data(), proj.geometry, step_mm, views, out);
    return out;
}

}  // namespace scbct
