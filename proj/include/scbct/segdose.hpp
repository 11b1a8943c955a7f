#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "scbct/parallel.hpp"
#include "scbct/volume.hpp"

namespace scbct {

// Dose values live in plain Volume3 grids, interpreted as Gy.
using DoseGrid = Volume3;

struct BlandAltmanStats {
    double bias = 0.0;
    double sd = 0.0;
    double loa_low = 0.0;
    double loa_high = 0.0;
    int n = 0;
};

struct DvhCurve {
    std::vector<double> dose_edges;  // Gy, size n_bins + 1
    std::vector<double> volume_cc;   // cc at or above each edge
};

struct LossResult {
    double loss = 0.0;
    Volume3 gradient;
};

namespace detail {

inline void require_same_grid_m(const Grid3& a, const Grid3& b, const char* op) {
    if (!a.same_as(b)) throw std::invalid_argument(std::string(op) + ": grid mismatch");
}

inline void require_dose(const DoseGrid& dose, const char* op) {
    for (float v : dose.values)
        if (!std::isfinite(v) || v < 0.0f)
            throw std::invalid_argument(std::string(op) + ": dose values must be finite and >= 0");
}

// Border voxels: foreground with at least one 6-neighbor outside the mask.
inline std::vector<std::array<int, 3>> border_voxels(const Mask3& m) {
    std::vector<std::array<int, 3>> out;
    const auto& d = m.grid.dims;
    auto fg = [&](int i, int j, int k) {
        if (i < 0 || j < 0 || k < 0 || i >= d[0] || j >= d[1] || k >= d[2]) return false;
        return m.values[m.grid.index(i, j, k)] != 0;
    };
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                if (!fg(i, j, k)) continue;
                if (!fg(i - 1, j, k) || !fg(i + 1, j, k) || !fg(i, j - 1, k) ||
                    !fg(i, j + 1, k) || !fg(i, j, k - 1) || !fg(i, j, k + 1))
                    out.push_back({i, j, k});
            }
    return out;
}

inline double percentile_interp(std::vector<double>& sorted_values, double p) {
    std::sort(sorted_values.begin(), sorted_values.end());
    const std::size_t n = sorted_values.size();
    if (n == 1) return sorted_values[0];
    const double rank = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= n) return sorted_values[n - 1];
    return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]);
}

inline void directed_surface_distances(const std::vector<std::array<int, 3>>& from,
                                       const std::vector<std::array<int, 3>>& to,
                                       const std::array<double, 3>& sp,
                                       std::vector<double>& out, std::size_t offset) {
    parallel_for(0, static_cast<std::int64_t>(from.size()), [&](std::int64_t i) {
        const auto& p = from[i];
        double best = INFINITY;
        for (const auto& q : to) {
            const double dx = (p[0] - q[0]) * sp[0];
            const double dy = (p[1] - q[1]) * sp[1];
            const double dz = (p[2] - q[2]) * sp[2];
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < best) best = d2;
        }
        out[offset + i] = std::sqrt(best);
    });
}

inline std::vector<float> masked_doses(const DoseGrid& dose, const Mask3& mask,
                                       const char* op) {
    require_same_grid_m(dose.grid, mask.grid, op);
    require_dose(dose, op);
    std::vector<float> vals;
    for (std::size_t i = 0; i < mask.values.size(); ++i)
        if (mask.values[i]) vals.push_back(dose.values[i]);
    if (vals.empty()) throw std::invalid_argument(std::string(op) + ": empty mask");
    return vals;
}

inline double voxel_cc(const Grid3& g) {
    return g.spacing[0] * g.spacing[1] * g.spacing[2] / 1000.0;
}

}  // namespace detail

inline double dice(const Mask3& a, const Mask3& b) {
    detail::require_same_grid_m(a.grid, b.grid, "dice");
    std::size_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        na += a.values[i] != 0;
        nb += b.values[i] != 0;
        inter += (a.values[i] != 0) && (b.values[i] != 0);
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

/// 95th percentile of the pooled symmetric surface-to-surface distance set, in
/// mm. Surfaces are 6-neighborhood border voxels; the percentile interpolates
/// between order statistics at rank 0.95 * (n - 1).
inline double hd95(const Mask3& a, const Mask3& b) {
    detail::require_same_grid_m(a.grid, b.grid, "hd95");
    const auto sa = detail::border_voxels(a);
    const auto sb = detail::border_voxels(b);
    if (sa.empty() || sb.empty()) throw std::invalid_argument("hd95: empty mask");
    std::vector<double> dists(sa.size() + sb.size());
    detail::directed_surface_distances(sa, sb, a.grid.spacing, dists, 0);
    detail::directed_surface_distances(sb, sa, a.grid.spacing, dists, sa.size());
    return detail::percentile_interp(dists, 0.95);
}

/// Soft-Dice plus binary cross-entropy with the exact elementwise gradient
/// with respect to pred.
inline LossResult combined_loss(const Volume3& pred, const Mask3& truth,
                                double w_dice = 1.0, double w_bce = 1.0,
                                double eps = 1e-6) {
    detail::require_same_grid_m(pred.grid, truth.grid, "combined_loss");
    if (w_dice < 0.0 || w_bce < 0.0)
        throw std::invalid_argument("combined_loss: weights must be >= 0");
    if (!(eps > 0.0)) throw std::invalid_argument("combined_loss: eps must be > 0");
    for (float p : pred.values)
        if (!(p >= 0.0f && p <= 1.0f))
            throw std::invalid_argument("combined_loss: pred outside [0,1]");

    const std::size_t nvox = pred.values.size();
    const double n = static_cast<double>(nvox);
    double sum_p = 0.0, sum_g = 0.0, sum_pg = 0.0, bce = 0.0;
    for (std::size_t i = 0; i < nvox; ++i) {
        const double p = pred.values[i];
        const double g = truth.values[i] ? 1.0 : 0.0;
        sum_p += p;
        sum_g += g;
        sum_pg += p * g;
        bce += -g * std::log(p + eps) - (1.0 - g) * std::log(1.0 - p + eps);
    }
    const double num = 2.0 * sum_pg + eps;
    const double den = sum_p + sum_g + eps;

    LossResult r;
    r.loss = w_dice * (1.0 - num / den) + w_bce * (bce / n);
    r.gradient = Volume3::zeros(pred.grid);
    for (std::size_t i = 0; i < nvox; ++i) {
        const double p = pred.values[i];
        const double g = truth.values[i] ? 1.0 : 0.0;
        const double d_dice = (num - 2.0 * g * den) / (den * den);
        const double d_bce = (-g / (p + eps) + (1.0 - g) / (1.0 - p + eps)) / n;
        r.gradient.values[i] = static_cast<float>(w_dice * d_dice + w_bce * d_bce);
    }
    return r;
}

inline double mean_dose(const DoseGrid& dose, const Mask3& mask) {
    const auto vals = detail::masked_doses(dose, mask, "mean_dose");
    double acc = 0.0;
    for (float v : vals) acc += v;
    return acc / static_cast<double>(vals.size());
}

/// Minimum dose received by the hottest volume_cc of the structure, with
/// linear interpolation across the threshold voxel.
inline double d_cc(const DoseGrid& dose, const Mask3& mask, double volume_cc) {
    auto vals = detail::masked_doses(dose, mask, "d_cc");
    const double vcc = detail::voxel_cc(dose.grid);
    const double structure_cc = static_cast<double>(vals.size()) * vcc;
    if (!(volume_cc > 0.0)) throw std::invalid_argument("d_cc: volume_cc must be > 0");
    if (volume_cc > structure_cc)
        throw std::invalid_argument("d_cc: structure smaller than requested volume");
    std::sort(vals.begin(), vals.end(), std::greater<float>());
    const double t = volume_cc / vcc;  // threshold in voxels
    if (t <= 1.0) return vals[0];
    const double k = std::floor(t);
    const std::size_t ik = static_cast<std::size_t>(k);
    if (t == k || ik >= vals.size()) return vals[ik - 1];
    return vals[ik - 1] + (t - k) * (static_cast<double>(vals[ik]) - vals[ik - 1]);
}

/// Cumulative cc-at-or-above-dose curve over uniform dose levels [0, max].
inline DvhCurve dvh(const DoseGrid& dose, const Mask3& mask, int n_bins = 100) {
    if (n_bins < 1) throw std::invalid_argument("dvh: n_bins must be >= 1");
    auto vals = detail::masked_doses(dose, mask, "dvh");
    const double vcc = detail::voxel_cc(dose.grid);
    const double mx = *std::max_element(vals.begin(), vals.end());
    std::sort(vals.begin(), vals.end());
    DvhCurve c;
    c.dose_edges.resize(n_bins + 1);
    c.volume_cc.resize(n_bins + 1);
    for (int i = 0; i <= n_bins; ++i) {
        const double level = mx * i / n_bins;
        c.dose_edges[i] = level;
        const auto it = std::lower_bound(vals.begin(), vals.end(), static_cast<float>(level));
        c.volume_cc[i] = static_cast<double>(vals.end() - it) * vcc;
    }
    return c;
}

inline BlandAltmanStats bland_altman(const std::vector<std::array<double, 2>>& pairs) {
    if (pairs.size() < 2)
        throw std::invalid_argument("bland_altman: need at least 2 pairs");
    const double n = static_cast<double>(pairs.size());
    double mean = 0.0;
    for (const auto& p : pairs) mean += p[0] - p[1];
    mean /= n;
    double ss = 0.0;
    for (const auto& p : pairs) {
        const double d = p[0] - p[1] - mean;
        ss += d * d;
    }
    BlandAltmanStats s;
    s.bias = mean;
    s.sd = std::sqrt(ss / (n - 1.0));
    s.loa_low = s.bias - 1.96 * s.sd;
    s.loa_high = s.bias + 1.96 * s.sd;
    s.n = static_cast<int>(pairs.size());
    return s;
}

}  // namespace scbct
