#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>

#include <scbct/volume.hpp>

#include "oracles.hpp"

using namespace scbct;

namespace {

Grid3 make_grid(std::array<int, 3> dims, std::array<double, 3> spacing,
                std::array<double, 3> origin) {
    return Grid3{dims, spacing, origin};
}

}  // namespace

TEST_CASE("grid index is x-fastest and voxel centers follow origin/spacing") {
    const Grid3 g = make_grid({4, 3, 2}, {1.5, 2.0, 2.5}, {-1.0, 0.5, 3.0});
    REQUIRE(g.voxel_count() == 24);
    REQUIRE(g.index(0, 0, 0) == 0);
    REQUIRE(g.index(1, 0, 0) == 1);
    REQUIRE(g.index(0, 1, 0) == 4);
    REQUIRE(g.index(0, 0, 1) == 12);
    const auto c = g.voxel_center(2, 1, 1);
    REQUIRE(c[0] == Catch::Approx(-1.0 + 2 * 1.5));
    REQUIRE(c[1] == Catch::Approx(0.5 + 1 * 2.0));
    REQUIRE(c[2] == Catch::Approx(3.0 + 1 * 2.5));
}

TEST_CASE("grid physical center and extent") {
    const Grid3 g = make_grid({4, 3, 2}, {2.0, 2.0, 2.0}, {0.0, 0.0, 0.0});
    const auto pc = g.physical_center();
    REQUIRE(pc[0] == Catch::Approx(3.0));
    REQUIRE(pc[1] == Catch::Approx(2.0));
    REQUIRE(pc[2] == Catch::Approx(1.0));
    const auto e = g.extent();
    REQUIRE(e[0][0] == Catch::Approx(-1.0));
    REQUIRE(e[0][1] == Catch::Approx(7.0));
    REQUIRE(e[2][1] == Catch::Approx(3.0));
}

TEST_CASE("grid validation rejects bad dims, spacing, origin") {
    Grid3 g;
    g.dims = {0, 1, 1};
    REQUIRE_THROWS_AS(g.validate(), std::invalid_argument);
    g = Grid3{};
    g.spacing[1] = 0.0;
    REQUIRE_THROWS_AS(g.validate(), std::invalid_argument);
    g = Grid3{};
    g.spacing[2] = -1.0;
    REQUIRE_THROWS_AS(g.validate(), std::invalid_argument);
    g = Grid3{};
    g.origin[0] = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("volume and mask validation") {
    const Grid3 g = make_grid({3, 3, 3}, {1, 1, 1}, {0, 0, 0});
    Volume3 v = Volume3::zeros(g);
    v.values.pop_back();
    REQUIRE_THROWS_AS(v.validate(), std::invalid_argument);
    v = Volume3::zeros(g);
    v.values[5] = std::numeric_limits<float>::quiet_NaN();
    REQUIRE_THROWS_AS(v.validate(), std::invalid_argument);

    Mask3 m = Mask3::zeros(g);
    m.values[0] = 2;
    REQUIRE_THROWS_AS(m.validate(), std::invalid_argument);
    m.values[0] = 1;
    REQUIRE_NOTHROW(m.validate());
    REQUIRE(m.foreground_count() == 1);
}

TEST_CASE("value_range scans all voxels") {
    const Grid3 g = make_grid({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
    Volume3 v = Volume3::filled(g, 0.25f);
    v.at(3, 2, 1) = -1.5f;
    v.at(0, 0, 3) = 2.0f;
    const auto [lo, hi] = value_range(v);
    REQUIRE(lo == -1.5f);
    REQUIRE(hi == 2.0f);
}

TEST_CASE("resampling a volume onto its own grid is bitwise exact") {
    const Grid3 g = make_grid({9, 8, 7}, {1.3, 0.9, 2.1}, {-4.0, 2.5, 11.0});
    const Volume3 v = oracle::random_volume(g, 42);
    for (auto interp : {Interp::kTrilinear, Interp::kNearest}) {
        const Volume3 r = resample_to_grid(v, g, interp);
        REQUIRE(r.values == v.values);
    }
    const Mask3 m = oracle::random_mask(g, 43);
    const Mask3 rm = resample_to_grid(m, g);
    REQUIRE(rm.values == m.values);
}

TEST_CASE("trilinear resampling at half-voxel shift averages neighbors") {
    const Grid3 g = make_grid({8, 4, 4}, {2.0, 2.0, 2.0}, {0, 0, 0});
    Volume3 v = Volume3::zeros(g);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 8; ++i) v.at(i, j, k) = static_cast<float>(i);
    Grid3 shifted = g;
    shifted.origin[0] += 1.0;  // half a voxel
    const Volume3 r = resample_to_grid(v, shifted, Interp::kTrilinear);
    REQUIRE(r.at(2, 1, 1) == Catch::Approx(2.5));
    REQUIRE(r.at(5, 2, 2) == Catch::Approx(5.5));
}

TEST_CASE("resampling outside the source extent yields zero") {
    const Grid3 g = make_grid({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
    const Volume3 v = Volume3::filled(g, 3.0f);
    Grid3 far = g;
    far.origin = {100, 100, 100};
    const Volume3 r = resample_to_grid(v, far, Interp::kTrilinear);
    for (float x : r.values) REQUIRE(x == 0.0f);
}

TEST_CASE("mask resampling onto a finer grid stays binary") {
    const Grid3 g = make_grid({6, 6, 6}, {2, 2, 2}, {0, 0, 0});
    const Mask3 m = oracle::random_mask(g, 7);
    Grid3 fine = make_grid({12, 12, 12}, {1, 1, 1}, {-0.5, -0.5, -0.5});
    const Mask3 r = resample_to_grid(m, fine);
    REQUIRE_NOTHROW(r.validate());
    REQUIRE(r.foreground_count() > 0);
}

TEST_CASE("subgrid and crop_to_region slice out the requested block") {
    const Grid3 g = make_grid({6, 5, 4}, {1.0, 2.0, 3.0}, {10.0, 20.0, 30.0});
    const GridRegion r{{1, 2, 0}, {4, 5, 3}};
    const Grid3 s = subgrid(g, r);
    REQUIRE(s.dims == std::array<int, 3>{3, 3, 3});
    REQUIRE(s.origin[0] == Catch::Approx(11.0));
    REQUIRE(s.origin[1] == Catch::Approx(24.0));
    REQUIRE(s.origin[2] == Catch::Approx(30.0));

    const Volume3 v = oracle::random_volume(g, 5);
    const Volume3 c = crop_to_region(v, r);
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i)
                REQUIRE(c.at(i, j, k) == v.at(i + 1, j + 2, k + 0));

    GridRegion bad{{0, 0, 0}, {7, 5, 4}};
    REQUIRE_THROWS_AS(subgrid(g, bad), std::invalid_argument);
    GridRegion inverted{{2, 0, 0}, {2, 5, 4}};
    REQUIRE_THROWS_AS(subgrid(g, inverted), std::invalid_argument);
}

TEST_CASE("crop_overlap_fov keeps the shared physical block of both volumes") {
    const Grid3 ga = make_grid({10, 10, 10}, {1, 1, 1}, {0, 0, 0});
    const Grid3 gb = make_grid({6, 6, 6}, {1, 1, 1}, {3, 3, 3});
    const Volume3 a = oracle::random_volume(ga, 1);
    const Volume3 b = oracle::random_volume(gb, 2);
    const FovCrop out = crop_overlap_fov(a, b);
    REQUIRE(out.region.lo == std::array<int, 3>{3, 3, 3});
    REQUIRE(out.region.hi == std::array<int, 3>{9, 9, 9});
    REQUIRE(out.ref.grid.dims == std::array<int, 3>{6, 6, 6});
    REQUIRE(out.ref.grid.same_as(out.other.grid));
    REQUIRE(out.ref.at(0, 0, 0) == a.at(3, 3, 3));
    REQUIRE(out.other.at(0, 0, 0) == b.at(0, 0, 0));

    // Other volume hanging off the top edge.
    const Grid3 gc = make_grid({6, 6, 6}, {1, 1, 1}, {7, 0, 0});
    const Volume3 c = oracle::random_volume(gc, 3);
    const FovCrop out2 = crop_overlap_fov(a, c);
    REQUIRE(out2.region.lo[0] == 7);
    REQUIRE(out2.region.hi[0] == 10);
    REQUIRE(out2.other.at(0, 0, 0) == c.at(0, 0, 0));
}

TEST_CASE("crop_overlap_fov rejects incompatible lattices") {
    const Grid3 ga = make_grid({8, 8, 8}, {1, 1, 1}, {0, 0, 0});
    const Volume3 a = oracle::random_volume(ga, 1);

    Grid3 gb = ga;
    gb.spacing[0] = 1.5;
    REQUIRE_THROWS_WITH(crop_overlap_fov(a, Volume3::zeros(gb)),
                        Catch::Matchers::ContainsSubstring("spacing mismatch"));

    gb = ga;
    gb.origin[1] = 0.37;
    REQUIRE_THROWS_WITH(crop_overlap_fov(a, Volume3::zeros(gb)),
                        Catch::Matchers::ContainsSubstring("not aligned"));

    gb = ga;
    gb.origin[0] = 50.0;
    REQUIRE_THROWS_WITH(crop_overlap_fov(a, Volume3::zeros(gb)),
                        Catch::Matchers::ContainsSubstring("empty physical intersection"));
}

TEST_CASE("lattice_overlap_grid selects reference voxels inside the other extent") {
    const Grid3 ref = make_grid({20, 20, 20}, {1, 1, 1}, {0, 0, 0});
    // Other spans physically [4.5, 12.5) per axis: voxel centers 5..12 are inside.
    const Grid3 other = make_grid({4, 4, 4}, {2, 2, 2}, {5.5, 5.5, 5.5});
    const Grid3 out = lattice_overlap_grid(ref, other);
    REQUIRE(out.dims == std::array<int, 3>{8, 8, 8});
    REQUIRE(out.origin[0] == Catch::Approx(5.0));
    REQUIRE(out.spacing == ref.spacing);

    const Grid3 disjoint = make_grid({4, 4, 4}, {2, 2, 2}, {100, 0, 0});
    REQUIRE_THROWS_AS(lattice_overlap_grid(ref, disjoint), std::invalid_argument);
}

TEST_CASE("add_scaled computes a + lambda*b and checks grids") {
    const Grid3 g = make_grid({5, 5, 5}, {1, 1, 1}, {0, 0, 0});
    const Volume3 a = oracle::random_volume(g, 11);
    const Volume3 b = oracle::random_volume(g, 12);
    const Volume3 s = add_scaled(a, b, 0.75);
    for (std::size_t i = 0; i < s.values.size(); ++i)
        REQUIRE(s.values[i] ==
                Catch::Approx(a.values[i] + 0.75 * b.values[i]).margin(1e-7));

    Grid3 g2 = g;
    g2.dims = {5, 5, 4};
    REQUIRE_THROWS_WITH(add_scaled(a, Volume3::zeros(g2), 1.0),
                        Catch::Matchers::ContainsSubstring("grid mismatch"));
}

TEST_CASE("rescale_unit maps the range onto [0,1] and rejects constants") {
    const Grid3 g = make_grid({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
    Volume3 v = oracle::random_volume(g, 3, -5.0f, 7.0f);
    v.values[0] = -5.0f;
    v.values[1] = 7.0f;
    const Volume3 r = rescale_unit(v);
    const auto [lo, hi] = value_range(r);
    REQUIRE(lo == 0.0f);
    REQUIRE(hi == 1.0f);
    for (std::size_t i = 0; i < v.values.size(); ++i)
        REQUIRE(r.values[i] == Catch::Approx((v.values[i] + 5.0) / 12.0).margin(1e-6));

    REQUIRE_THROWS_WITH(rescale_unit(Volume3::filled(g, 0.4f)),
                        Catch::Matchers::ContainsSubstring("constant"));
}

TEST_CASE("gaussian noise is seed-deterministic and zero-sigma is the identity") {
    const Grid3 g = make_grid({8, 8, 8}, {1, 1, 1}, {0, 0, 0});
    const Volume3 v = oracle::random_volume(g, 21);
    const Volume3 same = add_gaussian_noise(v, 0.0, 99);
    REQUIRE(same.values == v.values);

    const Volume3 n1 = add_gaussian_noise(v, 0.05, 1234);
    const Volume3 n2 = add_gaussian_noise(v, 0.05, 1234);
    const Volume3 n3 = add_gaussian_noise(v, 0.05, 1235);
    REQUIRE(n1.values == n2.values);
    REQUIRE(n1.values != n3.values);
    REQUIRE_THROWS_AS(add_gaussian_noise(v, -0.1, 0), std::invalid_argument);
}

TEST_CASE("gaussian noise has the requested moments") {
    const Grid3 g = make_grid({40, 40, 40}, {1, 1, 1}, {0, 0, 0});
    const Volume3 v = Volume3::zeros(g);
    const double sigma = 0.2;
    const Volume3 n = add_gaussian_noise(v, sigma, 777);
    double mean = 0.0;
    for (float x : n.values) mean += x;
    mean /= static_cast<double>(n.values.size());
    double var = 0.0;
    for (float x : n.values) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n.values.size());
    REQUIRE(std::abs(mean) < 3.0 * sigma / std::sqrt(64000.0));
    REQUIRE(std::sqrt(var) == Catch::Approx(sigma).epsilon(0.02));
}

TEST_CASE("cleanup_mask removes small islands and keeps large components") {
    const Grid3 g = make_grid({20, 20, 20}, {1, 1, 1}, {0, 0, 0});
    Mask3 m = Mask3::zeros(g);
    for (int k = 4; k < 14; ++k)
        for (int j = 4; j < 14; ++j)
            for (int i = 4; i < 14; ++i) m.at(i, j, k) = 1;  // 1000 voxels
    m.at(17, 17, 17) = 1;  // lone voxel
    m.at(0, 17, 3) = 1;
    m.at(1, 17, 3) = 1;  // 2-voxel island
    const Mask3 out = cleanup_mask(m, 100);
    REQUIRE(out.at(17, 17, 17) == 0);
    REQUIRE(out.at(0, 17, 3) == 0);
    REQUIRE(out.at(5, 5, 5) == 1);
    REQUIRE(out.foreground_count() == 1000);
}

TEST_CASE("cleanup_mask fills enclosed cavities but not open notches") {
    const Grid3 g = make_grid({16, 16, 16}, {1, 1, 1}, {0, 0, 0});
    Mask3 m = Mask3::zeros(g);
    for (int k = 2; k < 14; ++k)
        for (int j = 2; j < 14; ++j)
            for (int i = 2; i < 14; ++i) m.at(i, j, k) = 1;
    // enclosed cavity
    m.at(7, 7, 7) = 0;
    m.at(8, 7, 7) = 0;
    // notch open to the boundary along +x
    for (int i = 10; i < 16; ++i) m.at(i, 15, 15) = 0;  // already 0; keep explicit
    for (int i = 10; i < 14; ++i) m.at(i, 13, 13) = 0;
    // connect the notch to outside air
    m.at(13, 13, 13) = 0;
    const Mask3 out = cleanup_mask(m, 10);
    REQUIRE(out.at(7, 7, 7) == 1);
    REQUIRE(out.at(8, 7, 7) == 1);
    REQUIRE(out.at(12, 13, 13) == 0);
}

TEST_CASE("cleanup_mask drops sub-threshold shells along with their cavity") {
    const Grid3 g = make_grid({12, 12, 12}, {1, 1, 1}, {0, 0, 0});
    Mask3 m = Mask3::zeros(g);
    // 3x3x3 hollow shell = 26 voxels, below the 100-voxel default
    for (int k = 4; k < 7; ++k)
        for (int j = 4; j < 7; ++j)
            for (int i = 4; i < 7; ++i) m.at(i, j, k) = 1;
    m.at(5, 5, 5) = 0;
    const Mask3 out = cleanup_mask(m);
    REQUIRE(out.foreground_count() == 0);
}

TEST_CASE("cleanup_mask is idempotent") {
    const Grid3 g = make_grid({14, 14, 14}, {1, 1, 1}, {0, 0, 0});
    Mask3 m = oracle::random_mask(g, 99, 0.45);
    const Mask3 once = cleanup_mask(m, 30);
    const Mask3 twice = cleanup_mask(once, 30);
    REQUIRE(once.values == twice.values);
}

TEST_CASE("parallel loops honor the thread override without changing results") {
    const Grid3 g = make_grid({16, 16, 16}, {1.0, 1.0, 1.0}, {0, 0, 0});
    const Volume3 a = oracle::random_volume(g, 31);
    const Volume3 b = oracle::random_volume(g, 32);
    setenv("SCBCT_THREADS", "1", 1);
    const Volume3 s1 = add_scaled(a, b, 0.3);
    setenv("SCBCT_THREADS", "3", 1);
    const Volume3 s3 = add_scaled(a, b, 0.3);
    unsetenv("SCBCT_THREADS");
    REQUIRE(s1.values == s3.values);
}
