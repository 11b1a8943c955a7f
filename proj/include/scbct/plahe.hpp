#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "scbct/volume.hpp"

namespace scbct {

// Signed power-law adaptive histogram equalization. Each voxel u is mapped
// through the empirical distribution of its local window {v_m}:
//
//   T(u) = (1/N) * sum_m [ q(u - v_m, alpha) - beta * q(u - v_m, 1) + beta * u ]
//   q(d, a) = 0.5 * sign(d) * |2d|^a
//
// alpha tunes between rank equalization (0) and local-mean subtraction (1);
// beta blends the original gray level back in. (1,1) is the identity map,
// (1,0) is unsharp masking, and a constant c maps to beta*c.

enum class ExtractionMode { kDirect, kResidual };

struct PlaheParams {
    double alpha = 0.5;
    double beta = 1.0;
    std::array<int, 3> window{5, 5, 5};
    ExtractionMode extraction_mode = ExtractionMode::kDirect;

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
            throw std::invalid_argument("PlaheParams: alpha and beta must lie in [0,1]");
        for (int w : window)
            if (w < 1 || w % 2 == 0)
                throw std::invalid_argument("PlaheParams: window extents must be odd and >= 1");
    }
};

struct AlphaBeta {
    double alpha;
    double beta;
};

/// The seven extraction settings, addressable by index 1-7.
inline const std::array<AlphaBeta, 7>& plahe_presets() {
    static const std::array<AlphaBeta, 7> presets{{{0.5, 1.0},
                                                   {1.0, 0.5},
                                                   {0.5, 0.5},
                                                   {1.0, 0.0},
                                                   {0.5, 0.0},
                                                   {0.0, 1.0},
                                                   {0.0, 0.5}}};
    return presets;
}

/// The raw transform output is the artifact field. Subtracting the input back
/// out (residual mode) drops the beta*u anatomy term and inverts the
/// end-to-end similarity ranking of the mild vs harsh presets.
inline ExtractionMode default_extraction_mode() { return ExtractionMode::kDirect; }

namespace detail {

enum class QKind { kZero, kHalf, kOne, kGeneric };

template <QKind kind>
inline double q_signed_power(double d, double alpha) {
    if (d == 0.0) return 0.0;
    const double s = d > 0.0 ? 0.5 : -0.5;
    if constexpr (kind == QKind::kZero) {
        (void)alpha;
        return s;
    } else if constexpr (kind == QKind::kHalf) {
        return s * std::sqrt(std::abs(2.0 * d));
    } else if constexpr (kind == QKind::kOne) {
        return d;
    } else {
        return s * std::pow(std::abs(2.0 * d), alpha);
    }
}

template <QKind kind>
void plahe_kernel(const Volume3& vol, const PlaheParams& p, Volume3& out) {
    const auto& dims = vol.grid.dims;
    const int rx = p.window[0] / 2, ry = p.window[1] / 2, rz = p.window[2] / 2;
    const double alpha = p.alpha, beta = p.beta;
    parallel_for(0, dims[2], [&](std::int64_t k) {
        const int k0 = std::max(0, static_cast<int>(k) - rz);
        const int k1 = std::min(dims[2] - 1, static_cast<int>(k) + rz);
        for (int j = 0; j < dims[1]; ++j) {
            const int j0 = std::max(0, j - ry);
            const int j1 = std::min(dims[1] - 1, j + ry);
            for (int i = 0; i < dims[0]; ++i) {
                const int i0 = std::max(0, i - rx);
                const int i1 = std::min(dims[0] - 1, i + rx);
                const double u = vol.at(i, j, static_cast<int>(k));
                double sum_q = 0.0, sum_d = 0.0;
                int n = 0;
                for (int kk = k0; kk <= k1; ++kk)
                    for (int jj = j0; jj <= j1; ++jj) {
                        const float* row = &vol.values[vol.grid.index(i0, jj, kk)];
                        for (int ii = 0; ii <= i1 - i0; ++ii) {
                            const double d = u - row[ii];
                            sum_q += q_signed_power<kind>(d, alpha);
                            sum_d += d;
                        }
                        n += i1 - i0 + 1;
                    }
                const double inv_n = 1.0 / n;
                out.at(i, j, static_cast<int>(k)) = static_cast<float>(
                    sum_q * inv_n - beta * sum_d * inv_n + beta * u);
            }
        }
    });
}

}  // namespace detail

/// Applies the windowed transform above. Input must be normalized to [0,1]
/// (tolerance 1e-6); windows are truncated at the volume borders with N
/// adjusted, the center voxel included.
inline Volume3 plahe_transform(const Volume3& vol, const PlaheParams& params) {
    params.validate();
    vol.grid.validate();
    for (float v : vol.values)
        if (!(v >= -1e-6f && v <= 1.0f + 1e-6f))
            throw std::invalid_argument("plahe_transform: values outside [0,1]");
    Volume3 out = Volume3::zeros(vol.grid);
    if (params.alpha == 0.0)
        detail::plahe_kernel<detail::QKind::kZero>(vol, params, out);
    else if (params.alpha == 0.5)
        detail::plahe_kernel<detail::QKind::kHalf>(vol, params, out);
    else if (params.alpha == 1.0)
        detail::plahe_kernel<detail::QKind::kOne>(vol, params, out);
    else
        detail::plahe_kernel<detail::QKind::kGeneric>(vol, params, out);
    return out;
}

/// Artifact field consumed by add_scaled: the raw transform output (direct)
/// or its difference against the input (residual).
inline Volume3 extract_artifact(const Volume3& cbct, const PlaheParams& params) {
    Volume3 t = plahe_transform(cbct, params);
    if (params.extraction_mode == ExtractionMode::kDirect) return t;
    const std::int64_t n = static_cast<std::int64_t>(t.values.size());
    parallel_for(0, n, [&](std::int64_t i) { t.values[i] -= cbct.values[i]; });
    return t;
}

}  // namespace scbct
