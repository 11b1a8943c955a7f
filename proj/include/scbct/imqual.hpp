#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "scbct/volume.hpp"

namespace scbct {

struct SimilarityReport {
    double ssim = 0.0;
    double rmse = 0.0;
    double cc = 0.0;
    double uqi = 0.0;
    int preset_index = -1;  // -1 when not tied to an artifact preset
    std::string params;

    static std::string csv_header() { return "preset_index,params,ssim,rmse,cc,uqi"; }
    std::string csv_row() const {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.9g,%.9g,%.9g", preset_index,
                      params.c_str(), ssim, rmse, cc, uqi);
        return buf;
    }
    nlohmann::json to_json() const {
        return {{"ssim", ssim},   {"rmse", rmse},
                {"cc", cc},       {"uqi", uqi},
                {"preset_index", preset_index}, {"params", params}};
    }
};

struct HistogramCurve {
    std::vector<double> bin_edges;    // n_bins + 1
    std::vector<double> frequencies;  // n_bins, max-normalized to 1
};

namespace detail {

inline void require_same_grid(const Volume3& a, const Volume3& b, const char* op) {
    if (!a.grid.same_as(b.grid))
        throw std::invalid_argument(std::string(op) + ": grid mismatch");
}

// Truncated box sum of radius r along one axis, per line prefix sums.
inline void box_sum_axis(std::vector<double>& field, const std::array<int, 3>& dims,
                         int axis, int r, std::vector<double>& scratch) {
    const int n = dims[axis];
    std::array<std::size_t, 3> stride{1, static_cast<std::size_t>(dims[0]),
                                      static_cast<std::size_t>(dims[0]) * dims[1]};
    const std::size_t step = stride[axis];
    const int n1 = dims[(axis + 1) % 3], n2 = dims[(axis + 2) % 3];
    const std::size_t s1 = stride[(axis + 1) % 3], s2 = stride[(axis + 2) % 3];
    scratch.resize(static_cast<std::size_t>(n) + 1);
    for (int j2 = 0; j2 < n2; ++j2)
        for (int j1 = 0; j1 < n1; ++j1) {
            double* line = field.data() + j1 * s1 + j2 * s2;
            scratch[0] = 0.0;
            for (int i = 0; i < n; ++i) scratch[i + 1] = scratch[i] + line[i * step];
            for (int i = 0; i < n; ++i) {
                const int lo = std::max(i - r, 0);
                const int hi = std::min(i + r, n - 1);
                line[i * step] = scratch[hi + 1] - scratch[lo];
            }
        }
}

inline std::vector<double> box_sum_3d(const std::vector<float>& src,
                                      const std::array<int, 3>& dims, int r) {
    std::vector<double> field(src.begin(), src.end());
    std::vector<double> scratch;
    for (int axis = 0; axis < 3; ++axis) box_sum_axis(field, dims, axis, r, scratch);
    return field;
}

inline int truncated_len(int i, int n, int r) {
    return std::min(i + r, n - 1) - std::max(i - r, 0) + 1;
}

// Shared SSIM/UQI machinery: 7^3 uniform window truncated at borders,
// population statistics. With c1 = c2 = 0 (UQI) zero-denominator windows
// contribute 1 when the two patches are identical and are skipped otherwise.
inline double windowed_similarity(const Volume3& a, const Volume3& b, double c1, double c2,
                                  const char* op) {
    require_same_grid(a, b, op);
    constexpr int kRadius = 3;
    const auto& dims = a.grid.dims;
    for (int ax = 0; ax < 3; ++ax)
        if (dims[ax] < 2 * kRadius + 1)
            throw std::invalid_argument(std::string(op) + ": volume smaller than window");

    auto sq = [](const std::vector<float>& v) {
        std::vector<float> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * v[i];
        return out;
    };
    std::vector<float> ab(a.values.size());
    for (std::size_t i = 0; i < ab.size(); ++i) ab[i] = a.values[i] * b.values[i];

    const auto sa = box_sum_3d(a.values, dims, kRadius);
    const auto sb = box_sum_3d(b.values, dims, kRadius);
    const auto saa = box_sum_3d(sq(a.values), dims, kRadius);
    const auto sbb = box_sum_3d(sq(b.values), dims, kRadius);
    const auto sab = box_sum_3d(ab, dims, kRadius);

    double total = 0.0;
    std::size_t count = 0;
    std::size_t idx = 0;
    for (int k = 0; k < dims[2]; ++k) {
        const int nz = truncated_len(k, dims[2], kRadius);
        for (int j = 0; j < dims[1]; ++j) {
            const int nyz = truncated_len(j, dims[1], kRadius) * nz;
            for (int i = 0; i < dims[0]; ++i, ++idx) {
                const double n = truncated_len(i, dims[0], kRadius) * nyz;
                const double mx = sa[idx] / n, my = sb[idx] / n;
                const double vx = std::max(0.0, saa[idx] / n - mx * mx);
                const double vy = std::max(0.0, sbb[idx] / n - my * my);
                const double cov = sab[idx] / n - mx * my;
                const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
                const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                if (den != 0.0) {
                    total += num / den;
                    ++count;
                    continue;
                }
                // zero denominator: compare the window contents directly
                bool identical = true;
                for (int wk = std::max(k - kRadius, 0);
                     identical && wk <= std::min(k + kRadius, dims[2] - 1); ++wk)
                    for (int wj = std::max(j - kRadius, 0);
                         identical && wj <= std::min(j + kRadius, dims[1] - 1); ++wj)
                        for (int wi = std::max(i - kRadius, 0);
                             wi <= std::min(i + kRadius, dims[0] - 1); ++wi) {
                            const std::size_t w = a.grid.index(wi, wj, wk);
                            if (a.values[w] != b.values[w]) {
                                identical = false;
                                break;
                            }
                        }
                if (identical) {
                    total += 1.0;
                    ++count;
                }
            }
        }
    }
    return count > 0 ? total / static_cast<double>(count) : 0.0;
}

}  // namespace detail

/// Mean local SSIM, 7^3 uniform window, C1 = 0.01^2, C2 = 0.03^2 on a unit
/// dynamic range. Callers rescale intensities to [0,1] first.
inline double ssim(const Volume3& a, const Volume3& b) {
    return detail::windowed_similarity(a, b, 0.01 * 0.01, 0.03 * 0.03, "ssim");
}

/// Universal quality index: SSIM with both stabilizing constants at zero.
inline double uqi(const Volume3& a, const Volume3& b) {
    return detail::windowed_similarity(a, b, 0.0, 0.0, "uqi");
}

inline double rmse(const Volume3& a, const Volume3& b) {
    detail::require_same_grid(a, b, "rmse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = static_cast<double>(a.values[i]) - b.values[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.values.size()));
}

/// Pearson correlation of the flattened values.
inline double cc(const Volume3& a, const Volume3& b) {
    detail::require_same_grid(a, b, "cc");
    const double n = static_cast<double>(a.values.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
    float min_x = a.values[0], max_x = a.values[0];
    float min_y = b.values[0], max_y = b.values[0];
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double x = a.values[i], y = b.values[i];
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        min_x = std::min(min_x, a.values[i]);
        max_x = std::max(max_x, a.values[i]);
        min_y = std::min(min_y, b.values[i]);
        max_y = std::max(max_y, b.values[i]);
    }
    const double vx = sxx / n - (sx / n) * (sx / n);
    const double vy = syy / n - (sy / n) * (sy / n);
    if (min_x == max_x || min_y == max_y || vx <= 0.0 || vy <= 0.0)
        throw std::invalid_argument("cc: constant input");
    const double r = (sxy / n - (sx / n) * (sy / n)) / std::sqrt(vx * vy);
    return std::clamp(r, -1.0, 1.0);
}

inline HistogramCurve histogram_curve(const Volume3& vol, int n_bins = 256,
                                      std::array<double, 2> range = {0.0, 1.0}) {
    if (n_bins < 1) throw std::invalid_argument("histogram_curve: n_bins must be >= 1");
    if (!(range[0] < range[1]))
        throw std::invalid_argument("histogram_curve: invalid range");
    vol.validate();
    HistogramCurve h;
    h.bin_edges.resize(n_bins + 1);
    for (int i = 0; i <= n_bins; ++i)
        h.bin_edges[i] = range[0] + i * (range[1] - range[0]) / n_bins;
    std::vector<std::int64_t> counts(n_bins, 0);
    const double scale = n_bins / (range[1] - range[0]);
    for (float v : vol.values) {
        int bin = static_cast<int>(std::floor((v - range[0]) * scale));
        bin = std::clamp(bin, 0, n_bins - 1);
        ++counts[bin];
    }
    const double mx = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
    h.frequencies.resize(n_bins);
    for (int i = 0; i < n_bins; ++i) h.frequencies[i] = counts[i] / mx;
    return h;
}

inline SimilarityReport compare_volumes(const Volume3& a, const Volume3& b) {
    SimilarityReport r;
    r.ssim = ssim(a, b);
    r.rmse = rmse(a, b);
    r.cc = cc(a, b);
    r.uqi = uqi(a, b);
    return r;
}

}  // namespace scbct
