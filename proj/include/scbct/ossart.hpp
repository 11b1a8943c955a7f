#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "scbct/projector.hpp"

namespace scbct {

struct OssartParams {
    double lambda = 1.0;
    int n_subsets = 20;
    int n_epochs = 20;
    bool nonnegativity = true;
    double epsilon = 1e-6;
    double step_mm = 0.0;  // <= 0 selects default_step_mm(grid)

    void validate(int n_views) const {
        if (!(lambda > 0.0)) throw std::invalid_argument("ossart: lambda must be > 0");
        if (n_subsets < 1 || n_subsets > n_views)
            throw std::invalid_argument("ossart: n_subsets must be in [1, n_views]");
        if (n_epochs < 1) throw std::invalid_argument("ossart: n_epochs must be >= 1");
        if (!(epsilon > 0.0)) throw std::invalid_argument("ossart: epsilon must be > 0");
    }
};

struct OssartResult {
    Volume3 volume;
    std::vector<double> residual_history;  // ||b - Ax|| / ||b|| after each epoch
};

namespace detail {

inline std::vector<std::vector<int>> interleaved_subsets(int n_views, int n_subsets) {
    std::vector<std::vector<int>> subsets(n_subsets);
    for (int v = 0; v < n_views; ++v) subsets[v % n_subsets].push_back(v);
    return subsets;
}

inline void check_finite(const Volume3& x, int epoch, int subset) {
    for (float v : x.values)
        if (!std::isfinite(v))
            throw std::runtime_error("ossart: non-finite value at epoch " +
                                     std::to_string(epoch) + ", subset " +
                                     std::to_string(subset));
}

}  // namespace detail

/// Ordered-subsets SART starting from `init`. Each subset update is
///   x += lambda * At_S((b_S - A_S x) / (A_S 1 + eps)) / (At_S 1 + eps)
/// with views interleaved across subsets. Per-subset normalizers are computed
/// on first use and reused across epochs.
inline OssartResult ossart_run(Volume3 init, const ProjectionSet& proj,
                               const OssartParams& params) {
    proj.validate();
    const ConeBeamGeometry& geom = proj.geometry;
    params.validate(geom.n_views());
    init.grid.validate();
    if (init.values.size() != init.grid.voxel_count())
        throw std::invalid_argument("ossart: init volume size mismatch");
    const double step = params.step_mm > 0.0 ? params.step_mm : default_step_mm(init.grid);
    const std::size_t per_view = static_cast<std::size_t>(geom.det_rows) * geom.det_cols;
    const std::size_t nvox = init.grid.voxel_count();

    const auto subsets = detail::interleaved_subsets(geom.n_views(), params.n_subsets);
    std::vector<std::vector<float>> row_norm(params.n_subsets);
    std::vector<std::vector<float>> col_norm(params.n_subsets);

    Volume3 x = std::move(init);
    std::vector<float> fwd, resid;
    std::vector<float> full_fwd(proj.data.size());
    std::vector<int> all_views(geom.n_views());
    for (int v = 0; v < geom.n_views(); ++v) all_views[v] = v;

    OssartResult result;
    result.residual_history.reserve(params.n_epochs);

    for (int epoch = 0; epoch < params.n_epochs; ++epoch) {
        for (int s = 0; s < params.n_subsets; ++s) {
            const auto& views = subsets[s];
            const std::size_t n = views.size() * per_view;

            if (row_norm[s].empty()) {
                row_norm[s].resize(n);
                Volume3 ones = Volume3::filled(x.grid, 1.0f);
                forward_project_views(ones, geom, step, views, row_norm[s].data());

                std::vector<float> ones_proj(n, 1.0f);
                Volume3 cn = Volume3::zeros(x.grid);
                back_project_views(ones_proj.data(), geom, step, views, cn);
                col_norm[s] = std::move(cn.values);
            }

            fwd.resize(n);
            forward_project_views(x, geom, step, views, fwd.data());
            resid.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t src =
                    static_cast<std::size_t>(views[i / per_view]) * per_view + i % per_view;
                resid[i] = static_cast<float>((proj.data[src] - fwd[i]) /
                                              (row_norm[s][i] + params.epsilon));
            }

            Volume3 upd = Volume3::zeros(x.grid);
            back_project_views(resid.data(), geom, step, views, upd);
            for (std::size_t i = 0; i < nvox; ++i) {
                float v = x.values[i] + static_cast<float>(params.lambda * upd.values[i] /
                                                           (col_norm[s][i] + params.epsilon));
                if (params.nonnegativity && v < 0.0f) v = 0.0f;
                x.values[i] = v;
            }
            detail::check_finite(x, epoch, s);
        }

        forward_project_views(x, geom, step, all_views, full_fwd.data());
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < proj.data.size(); ++i) {
            const double d = proj.data[i] - full_fwd[i];
            num += d * d;
            den += static_cast<double>(proj.data[i]) * proj.data[i];
        }
        result.residual_history.push_back(den > 0.0 ? std::sqrt(num / den)
                                                    : (num > 0.0 ? INFINITY : 0.0));
    }

    result.volume = std::move(x);
    return result;
}

inline OssartResult reconstruct(const ProjectionSet& proj, const Grid3& grid,
                                const OssartParams& params = {}) {
    return ossart_run(Volume3::zeros(grid), proj, params);
}

}  // namespace scbct
