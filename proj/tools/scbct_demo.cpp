// Generates a ready-to-run demo case: a clean phantom "pCT" on a wide grid, a
// streaked/noisy "CBCT" on a narrower grid, the tube contour mask and a
// synthetic dose grid, plus a matching pipeline config.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "scbct/metaimage.hpp"
#include "scbct/phantom.hpp"
#include "scbct/pipeline.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"demo inputs for the sCBCT toolkit"};
    std::string output = "demo";
    int size = 64;
    double spacing = 2.5;
    std::uint64_t seed = 7;
    app.add_option("--output", output, "output directory");
    app.add_option("--size", size, "CBCT grid size per axis")->check(CLI::PositiveNumber);
    app.add_option("--spacing", spacing, "voxel spacing in mm")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "streak/noise seed");
    CLI11_PARSE(app, argc, argv);

    try {
        const scbct::Grid3 cbct_grid = scbct::centered_cube_grid(size, spacing);
        scbct::Grid3 pct_grid = scbct::centered_grid(
            {size + 8, size + 8, size + 4}, {spacing, spacing, spacing});

        const scbct::Volume3 pct = scbct::desk_phantom(pct_grid);
        scbct::Volume3 cbct = scbct::desk_phantom(cbct_grid);
        cbct = scbct::add_streaks(cbct, 12, 0.12, seed);
        cbct = scbct::add_gaussian_noise(cbct, 0.02, seed + 1);
        const scbct::Mask3 mask = scbct::desk_phantom_tube_mask(pct_grid);

        // dose: smooth peak over the tube, falling off with distance
        scbct::Volume3 dose = scbct::Volume3::zeros(pct_grid);
        const auto c = pct_grid.physical_center();
        const double rx = 0.42 * pct_grid.dims[0] * pct_grid.spacing[0];
        const double ry = 0.34 * pct_grid.dims[1] * pct_grid.spacing[1];
        for (int k = 0; k < pct_grid.dims[2]; ++k)
            for (int j = 0; j < pct_grid.dims[1]; ++j)
                for (int i = 0; i < pct_grid.dims[0]; ++i) {
                    const auto p = pct_grid.voxel_center(i, j, k);
                    const double dx = p[0] - c[0] + 0.04 * rx;
                    const double dy = p[1] - c[1] - 0.30 * ry;
                    const double dz = p[2] - c[2];
                    const double r2 = dx * dx + dy * dy + 0.25 * dz * dz;
                    dose.values[pct_grid.index(i, j, k)] =
                        static_cast<float>(45.0 * std::exp(-r2 / (2.0 * 900.0)));
                }

        fs::create_directories(output);
        scbct::write_metaimage(pct, fs::path(output) / "pct.mha");
        scbct::write_metaimage(cbct, fs::path(output) / "cbct.mha");
        scbct::write_metaimage(mask, fs::path(output) / "mask_tube.mha");
        scbct::write_metaimage(dose, fs::path(output) / "dose.mha");

        scbct::PipelineConfig cfg = scbct::desk_config();
        cfg.ossart.n_subsets = 10;
        cfg.ossart.n_epochs = 10;
        cfg.noise_sigma = 0.01;
        cfg.output_dir = (fs::path(output) / "out").string();
        scbct::detail::write_text_atomic(fs::path(output) / "config.json",
                                         cfg.to_json().dump(2) + "\n");

        std::cout << "demo case written to " << output << "\n"
                  << "next: scbct synthesize --pct " << output << "/pct.mha --cbct " << output
                  << "/cbct.mha --mask tube=" << output << "/mask_tube.mha --config "
                  << output << "/config.json --output " << output << "/out --seed 42\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "scbct-demo: error: " << e.what() << "\n";
        return 1;
    }
}
