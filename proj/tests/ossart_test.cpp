#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include <scbct/ossart.hpp>
#include <scbct/phantom.hpp>

#include "oracles.hpp"

using namespace scbct;

namespace {

ConeBeamGeometry toy_geometry(int n_views, int det, double pixel) {
    ConeBeamGeometry g;
    g.det_rows = det;
    g.det_cols = det;
    g.pixel_size = {pixel, pixel};
    g.center_offset = {0.0, 0.0};
    g.angles = uniform_angles(n_views);
    return g;
}

}  // namespace

TEST_CASE("reconstruction of consistent data converges toward the phantom") {
    const Grid3 grid = centered_cube_grid(12, 4.0);  // 48 mm
    const Volume3 truth = desk_phantom(grid);
    const auto geom = toy_geometry(24, 24, 4.0);
    const double step = 2.0;
    const ProjectionSet b = forward_project(truth, geom, step);

    OssartParams params;
    params.n_subsets = 4;
    params.n_epochs = 12;
    params.step_mm = step;
    const OssartResult r = reconstruct(b, grid, params);

    REQUIRE(r.residual_history.size() == 12);
    for (std::size_t i = 1; i < r.residual_history.size(); ++i)
        REQUIRE(r.residual_history[i] <= r.residual_history[i - 1] + 1e-3);
    REQUIRE(r.residual_history.back() <
            std::max(0.2 * r.residual_history.front(), 0.01));

    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < truth.values.size(); ++i) {
        err += (r.volume.values[i] - truth.values[i]) *
               (r.volume.values[i] - truth.values[i]);
        ref += truth.values[i] * truth.values[i];
    }
    REQUIRE(std::sqrt(err / ref) < 0.35);
}

TEST_CASE("a solution of the system is a bitwise fixed point") {
    const Grid3 grid = centered_cube_grid(10, 4.0);
    const Volume3 truth = desk_phantom(grid);
    const auto geom = toy_geometry(12, 16, 5.0);
    const double step = 2.0;
    const ProjectionSet b = forward_project(truth, geom, step);

    OssartParams params;
    params.n_subsets = 3;
    params.n_epochs = 3;
    params.step_mm = step;
    const OssartResult r = ossart_run(truth, b, params);
    REQUIRE(r.volume.values == truth.values);
    for (double res : r.residual_history) REQUIRE(res == 0.0);
}

TEST_CASE("updates agree with a dense simultaneous-update loop") {
    const Grid3 grid = centered_cube_grid(4, 8.0);  // 64 voxels
    Volume3 truth = Volume3::zeros(grid);
    for (int k = 1; k < 3; ++k)
        for (int j = 1; j < 3; ++j)
            for (int i = 1; i < 3; ++i) truth.at(i, j, k) = 0.8f;
    truth.at(1, 1, 1) = 0.3f;
    const auto geom = toy_geometry(2, 8, 8.0);
    const double step = 4.0;
    const ProjectionSet b = forward_project(truth, geom, step);

    OssartParams params;
    params.lambda = 0.9;
    params.n_subsets = 2;
    params.n_epochs = 2;
    params.step_mm = step;
    const OssartResult r = reconstruct(b, grid, params);

    const auto sys = oracle::dense_system(geom, grid, step, b);
    const auto x = oracle::dense_ossart(sys, geom.n_views(), b.pixels_per_view(),
                                        params.n_subsets, params.n_epochs, params.lambda,
                                        params.epsilon, params.nonnegativity);
    double mx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        mx = std::max(mx, std::abs(x[i] - r.volume.values[i]));
    REQUIRE(mx < 1e-5);
}

TEST_CASE("nonnegativity clamps the iterate and can be disabled") {
    const Grid3 grid = centered_cube_grid(8, 4.0);
    const Volume3 truth = desk_phantom(grid);
    const auto geom = toy_geometry(8, 12, 6.0);
    const double step = 2.0;
    ProjectionSet b = forward_project(truth, geom, step);
    for (std::size_t i = 0; i < b.data.size(); i += 2) b.data[i] = -b.data[i] - 0.5f;

    OssartParams params;
    params.n_subsets = 2;
    params.n_epochs = 2;
    params.step_mm = step;
    const OssartResult on = reconstruct(b, grid, params);
    float lo = 0.0f;
    for (float v : on.volume.values) lo = std::min(lo, v);
    REQUIRE(lo == 0.0f);

    params.nonnegativity = false;
    const OssartResult off = reconstruct(b, grid, params);
    lo = 0.0f;
    for (float v : off.volume.values) lo = std::min(lo, v);
    REQUIRE(lo < 0.0f);
}

TEST_CASE("parameter validation") {
    const auto geom = toy_geometry(6, 8, 6.0);
    const ProjectionSet b = ProjectionSet::zeros(geom);
    const Grid3 grid = centered_cube_grid(6, 4.0);
    OssartParams p;
    p.n_subsets = 7;  // more subsets than views
    REQUIRE_THROWS_WITH(reconstruct(b, grid, p),
                        Catch::Matchers::ContainsSubstring("n_subsets"));
    p = OssartParams{};
    p.lambda = 0.0;
    REQUIRE_THROWS_AS(reconstruct(b, grid, p), std::invalid_argument);
    p = OssartParams{};
    p.n_epochs = 0;
    REQUIRE_THROWS_AS(reconstruct(b, grid, p), std::invalid_argument);
    p = OssartParams{};
    p.epsilon = 0.0;
    REQUIRE_THROWS_AS(reconstruct(b, grid, p), std::invalid_argument);
    p = OssartParams{};
    p.n_subsets = 2;
    Volume3 bad_init = Volume3::zeros(grid);
    bad_init.values.pop_back();
    REQUIRE_THROWS_WITH(ossart_run(std::move(bad_init), b, p),
                        Catch::Matchers::ContainsSubstring("init volume size mismatch"));
}

TEST_CASE("divergence is reported with the failing epoch and subset") {
    const Grid3 grid = centered_cube_grid(6, 4.0);
    const auto geom = toy_geometry(4, 8, 6.0);
    OssartParams p;
    p.n_subsets = 2;
    p.n_epochs = 2;
    p.step_mm = 2.0;
    ProjectionSet b = ProjectionSet::zeros(geom);
    Volume3 init = Volume3::zeros(grid);
    init.values[0] = std::numeric_limits<float>::infinity();
    REQUIRE_THROWS_WITH(ossart_run(std::move(init), b, p),
                        Catch::Matchers::ContainsSubstring(
                            "ossart: non-finite value at epoch 0, subset 0"));
}

TEST_CASE("interleaved subsets partition the views") {
    const auto subsets = scbct::detail::interleaved_subsets(10, 4);
    REQUIRE(subsets.size() == 4);
    REQUIRE(subsets[0] == std::vector<int>{0, 4, 8});
    REQUIRE(subsets[1] == std::vector<int>{1, 5, 9});
    REQUIRE(subsets[2] == std::vector<int>{2, 6});
    REQUIRE(subsets[3] == std::vector<int>{3, 7});
}
