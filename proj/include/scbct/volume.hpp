#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scbct/parallel.hpp"

namespace scbct {

/// Regular 3D voxel lattice. `origin` is the physical position (mm) of the
/// center of voxel (0,0,0); storage is x-fastest.
struct Grid3 {
    std::array<int, 3> dims{1, 1, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
    }
    std::array<double, 3> voxel_center(int i, int j, int k) const {
        return {origin[0] + i * spacing[0], origin[1] + j * spacing[1],
                origin[2] + k * spacing[2]};
    }
    /// Physical center of the whole box (midpoint of the voxel-center lattice).
    std::array<double, 3> physical_center() const {
        return {origin[0] + 0.5 * (dims[0] - 1) * spacing[0],
                origin[1] + 0.5 * (dims[1] - 1) * spacing[1],
                origin[2] + 0.5 * (dims[2] - 1) * spacing[2]};
    }
    /// Inclusive physical extent per axis, voxel faces included (center +- spacing/2).
    std::array<std::array<double, 2>, 3> extent() const {
        std::array<std::array<double, 2>, 3> e;
        for (int a = 0; a < 3; ++a)
            e[a] = {origin[a] - 0.5 * spacing[a],
                    origin[a] + (dims[a] - 0.5) * spacing[a]};
        return e;
    }
    bool same_as(const Grid3& o, double tol = 1e-9) const {
        if (dims != o.dims) return false;
        for (int a = 0; a < 3; ++a) {
            if (std::abs(spacing[a] - o.spacing[a]) > tol * std::abs(spacing[a])) return false;
            if (std::abs(origin[a] - o.origin[a]) > tol * (std::abs(origin[a]) + spacing[a]))
                return false;
        }
        return true;
    }
    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] < 1) throw std::invalid_argument("Grid3: dims must be >= 1");
            if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
                throw std::invalid_argument("Grid3: spacing must be positive and finite");
            if (!std::isfinite(origin[a]))
                throw std::invalid_argument("Grid3: origin must be finite");
        }
    }
};

/// Axis-aligned voxel index region, lo inclusive / hi exclusive.
struct GridRegion {
    std::array<int, 3> lo{0, 0, 0};
    std::array<int, 3> hi{0, 0, 0};

    void validate_within(const Grid3& grid) const {
        for (int a = 0; a < 3; ++a) {
            if (!(lo[a] < hi[a])) throw std::invalid_argument("GridRegion: lo must be < hi");
            if (lo[a] < 0 || hi[a] > grid.dims[a])
                throw std::invalid_argument("GridRegion: region exceeds grid dims");
        }
    }
};

/// Dense scalar volume, float32, x-fastest.
struct Volume3 {
    Grid3 grid;
    std::vector<float> values;

    float& at(int i, int j, int k) { return values[grid.index(i, j, k)]; }
    float at(int i, int j, int k) const { return values[grid.index(i, j, k)]; }

    static Volume3 zeros(const Grid3& g) {
        g.validate();
        return Volume3{g, std::vector<float>(g.voxel_count(), 0.0f)};
    }
    static Volume3 filled(const Grid3& g, float v) {
        g.validate();
        return Volume3{g, std::vector<float>(g.voxel_count(), v)};
    }
    void validate() const {
        grid.validate();
        if (values.size() != grid.voxel_count())
            throw std::invalid_argument("Volume3: value count does not match dims");
        for (float v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("Volume3: non-finite value");
    }
};

/// Binary volume on the Volume3 grid model; values restricted to {0,1}.
struct Mask3 {
    Grid3 grid;
    std::vector<std::uint8_t> values;

    std::uint8_t& at(int i, int j, int k) { return values[grid.index(i, j, k)]; }
    std::uint8_t at(int i, int j, int k) const { return values[grid.index(i, j, k)]; }

    static Mask3 zeros(const Grid3& g) {
        g.validate();
        return Mask3{g, std::vector<std::uint8_t>(g.voxel_count(), 0)};
    }
    void validate() const {
        grid.validate();
        if (values.size() != grid.voxel_count())
            throw std::invalid_argument("Mask3: value count does not match dims");
        for (auto v : values)
            if (v > 1) throw std::invalid_argument("Mask3: values must be 0 or 1");
    }
    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (auto v : values) n += v;
        return n;
    }
};

inline void require_same_grid(const Grid3& a, const Grid3& b, const char* what) {
    if (!a.same_as(b)) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

inline std::pair<float, float> value_range(const Volume3& v) {
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (float x : v.values) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return {lo, hi};
}

namespace detail {

// Trilinear sample at continuous index coordinates; voxels outside the lattice
// contribute 0, so the field decays linearly to zero over one voxel beyond the
// border centers.
inline double tri_sample(const float* data, const std::array<int, 3>& dims, double x,
                         double y, double z) {
    const double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
    const int i0 = static_cast<int>(fx), j0 = static_cast<int>(fy), k0 = static_cast<int>(fz);
    const double ax = x - fx, ay = y - fy, az = z - fz;
    if (i0 < -1 || i0 >= dims[0] || j0 < -1 || j0 >= dims[1] || k0 < -1 || k0 >= dims[2])
        return 0.0;
    const std::size_t sx = 1, sy = dims[0],
                      sz = static_cast<std::size_t>(dims[0]) * dims[1];
    double acc = 0.0;
    for (int dk = 0; dk < 2; ++dk) {
        const int k = k0 + dk;
        if (k < 0 || k >= dims[2]) continue;
        const double wz = dk ? az : 1.0 - az;
        for (int dj = 0; dj < 2; ++dj) {
            const int j = j0 + dj;
            if (j < 0 || j >= dims[1]) continue;
            const double wyz = (dj ? ay : 1.0 - ay) * wz;
            for (int di = 0; di < 2; ++di) {
                const int i = i0 + di;
                if (i < 0 || i >= dims[0]) continue;
                acc += (di ? ax : 1.0 - ax) * wyz * data[i * sx + j * sy + k * sz];
            }
        }
    }
    return acc;
}

// Snaps near-integer index coordinates so that resampling a grid onto itself
// reproduces values bitwise.
inline double snap_index(double q) {
    const double r = std::round(q);
    return std::abs(q - r) < 1e-7 ? r : q;
}

}  // namespace detail

enum class Interp { kTrilinear, kNearest };

/// Resamples `src` onto `ref`; each output voxel is sampled at its physical
/// center, samples outside the source extent are 0.
inline Volume3 resample_to_grid(const Volume3& src, const Grid3& ref, Interp interp) {
    src.grid.validate();
    ref.validate();
    Volume3 out = Volume3::zeros(ref);
    const auto& sg = src.grid;
    const std::int64_t nxy = static_cast<std::int64_t>(ref.dims[0]) * ref.dims[1];
    parallel_for(0, ref.dims[2], [&](std::int64_t k) {
        for (int j = 0; j < ref.dims[1]; ++j) {
            const std::size_t row = static_cast<std::size_t>(k) * nxy +
                                    static_cast<std::size_t>(j) * ref.dims[0];
            for (int i = 0; i < ref.dims[0]; ++i) {
                const auto p = ref.voxel_center(i, j, static_cast<int>(k));
                const double qx = detail::snap_index((p[0] - sg.origin[0]) / sg.spacing[0]);
                const double qy = detail::snap_index((p[1] - sg.origin[1]) / sg.spacing[1]);
                const double qz = detail::snap_index((p[2] - sg.origin[2]) / sg.spacing[2]);
                double v = 0.0;
                if (interp == Interp::kTrilinear) {
                    v = detail::tri_sample(src.values.data(), sg.dims, qx, qy, qz);
                } else {
                    const int ii = static_cast<int>(std::lround(qx));
                    const int jj = static_cast<int>(std::lround(qy));
                    const int kk = static_cast<int>(std::lround(qz));
                    if (ii >= 0 && ii < sg.dims[0] && jj >= 0 && jj < sg.dims[1] && kk >= 0 &&
                        kk < sg.dims[2])
                        v = src.at(ii, jj, kk);
                }
                out.values[row + i] = static_cast<float>(v);
            }
        }
    });
    return out;
}

/// Mask resampling is nearest-neighbor by construction; the result stays binary.
inline Mask3 resample_to_grid(const Mask3& src, const Grid3& ref) {
    src.grid.validate();
    ref.validate();
    Mask3 out = Mask3::zeros(ref);
    const auto& sg = src.grid;
    parallel_for(0, ref.dims[2], [&](std::int64_t k) {
        for (int j = 0; j < ref.dims[1]; ++j)
            for (int i = 0; i < ref.dims[0]; ++i) {
                const auto p = ref.voxel_center(i, j, static_cast<int>(k));
                const int ii = static_cast<int>(
                    std::lround(detail::snap_index((p[0] - sg.origin[0]) / sg.spacing[0])));
                const int jj = static_cast<int>(
                    std::lround(detail::snap_index((p[1] - sg.origin[1]) / sg.spacing[1])));
                const int kk = static_cast<int>(
                    std::lround(detail::snap_index((p[2] - sg.origin[2]) / sg.spacing[2])));
                if (ii >= 0 && ii < sg.dims[0] && jj >= 0 && jj < sg.dims[1] && kk >= 0 &&
                    kk < sg.dims[2])
                    out.at(i, j, static_cast<int>(k)) = src.at(ii, jj, kk);
            }
    });
    return out;
}

inline Grid3 subgrid(const Grid3& g, const GridRegion& r) {
    r.validate_within(g);
    Grid3 out = g;
    for (int a = 0; a < 3; ++a) {
        out.dims[a] = r.hi[a] - r.lo[a];
        out.origin[a] = g.origin[a] + r.lo[a] * g.spacing[a];
    }
    return out;
}

template <typename VolOrMask>
VolOrMask crop_to_region(const VolOrMask& v, const GridRegion& r) {
    VolOrMask out;
    out.grid = subgrid(v.grid, r);
    out.values.resize(out.grid.voxel_count());
    for (int k = r.lo[2]; k < r.hi[2]; ++k)
        for (int j = r.lo[1]; j < r.hi[1]; ++j)
            for (int i = r.lo[0]; i < r.hi[0]; ++i)
                out.values[out.grid.index(i - r.lo[0], j - r.lo[1], k - r.lo[2])] =
                    v.values[v.grid.index(i, j, k)];
    return out;
}

struct FovCrop {
    Volume3 ref;
    Volume3 other;
    GridRegion region;  // in ref index space
};

/// Restricts both volumes to the maximal axis-aligned region where their
/// physical extents intersect. Requires both volumes on the same voxel lattice
/// (same spacing, origins offset by whole voxels) -- resample first otherwise.
inline FovCrop crop_overlap_fov(const Volume3& ref, const Volume3& other) {
    ref.grid.validate();
    other.grid.validate();
    std::array<int, 3> shift;
    for (int a = 0; a < 3; ++a) {
        const double rel = std::abs(ref.grid.spacing[a] - other.grid.spacing[a]) /
                           ref.grid.spacing[a];
        if (rel > 1e-9)
            throw std::invalid_argument(
                "crop_overlap_fov: spacing mismatch, resample to the reference grid first");
        const double off =
            (other.grid.origin[a] - ref.grid.origin[a]) / ref.grid.spacing[a];
        const double snapped = std::round(off);
        if (std::abs(off - snapped) > 1e-6)
            throw std::invalid_argument(
                "crop_overlap_fov: lattices not aligned, resample to the reference grid first");
        shift[a] = static_cast<int>(snapped);
    }
    GridRegion region;
    for (int a = 0; a < 3; ++a) {
        region.lo[a] = std::max(0, shift[a]);
        region.hi[a] = std::min(ref.grid.dims[a], shift[a] + other.grid.dims[a]);
        if (region.lo[a] >= region.hi[a])
            throw std::invalid_argument("crop_overlap_fov: empty physical intersection");
    }
    GridRegion other_region;
    for (int a = 0; a < 3; ++a) {
        other_region.lo[a] = region.lo[a] - shift[a];
        other_region.hi[a] = region.hi[a] - shift[a];
    }
    FovCrop out{crop_to_region(ref, region), crop_to_region(other, other_region), region};
    out.other.grid = out.ref.grid;  // identical lattice by construction
    return out;
}

/// The sub-grid of `ref`'s lattice whose voxels lie inside `other`'s physical
/// extent. Used to place a second scan on the reference lattice before cropping.
inline Grid3 lattice_overlap_grid(const Grid3& ref, const Grid3& other) {
    ref.validate();
    other.validate();
    const auto oe = other.extent();
    GridRegion r;
    for (int a = 0; a < 3; ++a) {
        const double lo_idx = (oe[a][0] - ref.origin[a]) / ref.spacing[a];
        const double hi_idx = (oe[a][1] - ref.origin[a]) / ref.spacing[a];
        r.lo[a] = std::max(0, static_cast<int>(std::ceil(lo_idx - 1e-9)));
        r.hi[a] = std::min(ref.dims[a], static_cast<int>(std::floor(hi_idx + 1e-9)) + 1);
        if (r.lo[a] >= r.hi[a])
            throw std::invalid_argument("lattice_overlap_grid: empty physical intersection");
    }
    return subgrid(ref, r);
}

/// out[i] = a[i] + lambda * b[i]
inline Volume3 add_scaled(const Volume3& a, const Volume3& b, double lambda) {
    require_same_grid(a.grid, b.grid, "add_scaled");
    Volume3 out = a;
    const std::int64_t n = static_cast<std::int64_t>(a.values.size());
    parallel_for(0, n, [&](std::int64_t i) {
        out.values[i] = static_cast<float>(a.values[i] + lambda * b.values[i]);
    });
    return out;
}

/// Affine map of the value range onto [0,1]. Errors on constant volumes.
inline Volume3 rescale_unit(const Volume3& v) {
    const auto [lo, hi] = value_range(v);
    if (!(hi > lo)) throw std::invalid_argument("rescale_unit: constant volume");
    Volume3 out = v;
    const double scale = 1.0 / (static_cast<double>(hi) - static_cast<double>(lo));
    const std::int64_t n = static_cast<std::int64_t>(v.values.size());
    parallel_for(0, n, [&](std::int64_t i) {
        out.values[i] = static_cast<float>((v.values[i] - lo) * scale);
    });
    return out;
}

/// Deterministic Gaussian generator (fixed mt19937_64 + Box-Muller), so noise
/// realizations are reproducible across platforms for a given seed.
class GaussianRng {
  public:
    explicit GaussianRng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {  // [0,1)
        return static_cast<double>(gen_() >> 11) * 0x1p-53;
    }
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1p-53;  // (0,1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * M_PI * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline Volume3 add_gaussian_noise(const Volume3& v, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: negative sigma");
    if (sigma == 0.0) return v;
    Volume3 out = v;
    GaussianRng rng(seed);
    for (auto& x : out.values) x = static_cast<float>(x + sigma * rng.normal());
    return out;
}

namespace detail {

// Multi-source BFS labelling of same-value components. `conn` is 6 or 26.
inline void flood_component(const Mask3& m, std::uint8_t value, int conn,
                            std::vector<std::int32_t>& label, std::int32_t id,
                            std::size_t seed_index, std::vector<std::size_t>& members) {
    const auto& d = m.grid.dims;
    std::deque<std::size_t> queue{seed_index};
    label[seed_index] = id;
    members.push_back(seed_index);
    while (!queue.empty()) {
        const std::size_t cur = queue.front();
        queue.pop_front();
        const int i = static_cast<int>(cur % d[0]);
        const int j = static_cast<int>((cur / d[0]) % d[1]);
        const int k = static_cast<int>(cur / (static_cast<std::size_t>(d[0]) * d[1]));
        for (int dk = -1; dk <= 1; ++dk)
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    if (di == 0 && dj == 0 && dk == 0) continue;
                    if (conn == 6 && std::abs(di) + std::abs(dj) + std::abs(dk) != 1) continue;
                    const int ni = i + di, nj = j + dj, nk = k + dk;
                    if (ni < 0 || ni >= d[0] || nj < 0 || nj >= d[1] || nk < 0 || nk >= d[2])
                        continue;
                    const std::size_t nidx = m.grid.index(ni, nj, nk);
                    if (label[nidx] == 0 && m.values[nidx] == value) {
                        label[nidx] = id;
                        members.push_back(nidx);
                        queue.push_back(nidx);
                    }
                }
    }
}

}  // namespace detail

/// Removes 26-connected foreground islands smaller than `min_island_voxels`,
/// then fills background cavities that are not 6-connected to the volume
/// boundary. Idempotent.
inline Mask3 cleanup_mask(const Mask3& mask, std::size_t min_island_voxels = 100) {
    mask.validate();
    Mask3 out = mask;
    const auto& d = out.grid.dims;
    const std::size_t n = out.grid.voxel_count();

    {  // island removal (26-connectivity on foreground)
        std::vector<std::int32_t> label(n, 0);
        std::int32_t next = 1;
        std::vector<std::size_t> members;
        for (std::size_t idx = 0; idx < n; ++idx) {
            if (out.values[idx] != 1 || label[idx] != 0) continue;
            members.clear();
            detail::flood_component(out, 1, 26, label, next++, idx, members);
            if (members.size() < min_island_voxels)
                for (std::size_t m : members) out.values[m] = 0;
        }
    }
    {  // cavity fill (6-connectivity on background, seeded from the boundary)
        std::vector<std::int32_t> label(n, 0);
        std::vector<std::size_t> members;
        auto seed_if_bg = [&](int i, int j, int k) {
            const std::size_t idx = out.grid.index(i, j, k);
            if (out.values[idx] == 0 && label[idx] == 0)
                detail::flood_component(out, 0, 6, label, 1, idx, members);
        };
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i)
                    if (i == 0 || i == d[0] - 1 || j == 0 || j == d[1] - 1 || k == 0 ||
                        k == d[2] - 1)
                        seed_if_bg(i, j, k);
        for (std::size_t idx = 0; idx < n; ++idx)
            if (out.values[idx] == 0 && label[idx] == 0) out.values[idx] = 1;
    }
    return out;
}

}  // namespace scbct
