// Command-line front end: artifact extraction, projection, reconstruction,
// end-to-end synthesis and the evaluation/report commands.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scbct/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<int> parse_preset_arg(const std::string& s, int max_index, const char* what) {
    std::vector<int> out;
    if (s == "all") {
        for (int i = 1; i <= max_index; ++i) out.push_back(i);
        return out;
    }
    std::size_t pos = 0;
    while (pos < s.size()) {
        const std::size_t comma = s.find(',', pos);
        const std::string tok = s.substr(pos, comma == std::string::npos ? comma : comma - pos);
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(tok, &used);
        } catch (...) {
            used = 0;
        }
        if (used != tok.size() || v < 1 || v > max_index)
            throw std::runtime_error(std::string(what) + ": expected 1.." +
                                     std::to_string(max_index) + " or 'all', got '" + s + "'");
        out.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty())
        throw std::runtime_error(std::string(what) + ": empty preset selection");
    return out;
}

struct CommonOpts {
    std::string config_path;
    std::string output = "out";
    std::string profile = "desk";
    std::string preset = "all";
    std::uint64_t seed = 0;
    bool seed_set = false;

    void attach(CLI::App* sub, bool with_preset = true) {
        sub->add_option("--config", config_path, "JSON config file (strict keys)")
            ->check(CLI::ExistingFile);
        sub->add_option("--output", output, "output directory");
        sub->add_option("--profile", profile, "geometry/profile defaults")
            ->check(CLI::IsMember({"clinical", "desk"}));
        sub->add_option_function<std::uint64_t>(
               "--seed", [this](std::uint64_t v) {
                   seed = v;
                   seed_set = true;
               },
               "noise seed (overrides config)");
        if (with_preset)
            sub->add_option("--preset", preset, "artifact preset index 1..7 or 'all'");
    }

    scbct::PipelineConfig resolve() const {
        scbct::PipelineConfig base =
            profile == "clinical" ? scbct::clinical_config() : scbct::desk_config();
        scbct::PipelineConfig cfg =
            config_path.empty() ? base : scbct::PipelineConfig::load(config_path, base);
        if (seed_set) cfg.seed = seed;
        cfg.output_dir = output;
        cfg.presets = parse_preset_arg(preset, 7, "--preset");
        return cfg;
    }
};

scbct::PlaheParams preset_params(const scbct::PipelineConfig& cfg, int pi) {
    const scbct::AlphaBeta ab = scbct::plahe_presets()[pi - 1];
    scbct::PlaheParams pp;
    pp.alpha = ab.alpha;
    pp.beta = ab.beta;
    pp.window = cfg.plahe_window;
    pp.extraction_mode = cfg.extraction_mode == "direct"
                             ? scbct::ExtractionMode::kDirect
                         : cfg.extraction_mode == "residual"
                             ? scbct::ExtractionMode::kResidual
                             : scbct::default_extraction_mode();
    return pp;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    scbct::detail::write_text_atomic(path, j.dump(2) + "\n");
}

// common front half of the synthesis chain: CBCT onto the pCT lattice, mutual
// FOV crop, unit-normalized CBCT
struct CroppedPair {
    scbct::Volume3 pct;
    scbct::Volume3 cbct_norm;
    double pct_range;
};

CroppedPair load_cropped_pair(const std::string& pct_path, const std::string& cbct_path) {
    const scbct::Volume3 pct = scbct::read_volume(pct_path);
    const scbct::Volume3 cbct = scbct::read_volume(cbct_path);
    const scbct::Grid3 target = scbct::lattice_overlap_grid(pct.grid, cbct.grid);
    const scbct::Volume3 cbct_rs =
        scbct::resample_to_grid(cbct, target, scbct::Interp::kTrilinear);
    scbct::FovCrop crop = scbct::crop_overlap_fov(pct, cbct_rs);
    const auto [lo, hi] = scbct::value_range(crop.ref);
    if (!(hi > lo)) throw std::runtime_error("pCT is constant after cropping");
    return {std::move(crop.ref), scbct::rescale_unit(crop.other),
            static_cast<double>(hi) - lo};
}

int cmd_extract(const CommonOpts& common, const std::string& input) {
    const scbct::PipelineConfig cfg = common.resolve();
    const scbct::Volume3 raw = scbct::read_volume(input);
    const scbct::Volume3 vol = scbct::rescale_unit(raw);
    fs::create_directories(cfg.output_dir);
    for (int pi : cfg.presets) {
        const scbct::Volume3 art = scbct::extract_artifact(vol, preset_params(cfg, pi));
        scbct::write_metaimage(
            art, fs::path(cfg.output_dir) / ("artifact_preset" + std::to_string(pi) + ".mha"));
    }
    return 0;
}

int cmd_induce(const CommonOpts& common, const std::string& pct_path,
               const std::string& cbct_path) {
    const scbct::PipelineConfig cfg = common.resolve();
    const CroppedPair pair = load_cropped_pair(pct_path, cbct_path);
    fs::create_directories(cfg.output_dir);
    scbct::write_metaimage(pair.pct, fs::path(cfg.output_dir) / "pct_cropped.mha");
    scbct::write_metaimage(pair.cbct_norm, fs::path(cfg.output_dir) / "cbct_cropped.mha");
    for (int pi : cfg.presets) {
        scbct::Volume3 art = scbct::extract_artifact(pair.cbct_norm, preset_params(cfg, pi));
        for (auto& v : art.values) v = static_cast<float>(v * pair.pct_range);
        const scbct::Volume3 induced = scbct::rescale_unit(
            scbct::add_scaled(pair.pct, art, cfg.induction_lambda));
        scbct::write_metaimage(
            induced, fs::path(cfg.output_dir) / ("induced_preset" + std::to_string(pi) + ".mha"));
    }
    return 0;
}

int cmd_project(const CommonOpts& common, const std::string& input) {
    const scbct::PipelineConfig cfg = common.resolve();
    const scbct::Volume3 vol = scbct::read_volume(input);
    const double step = cfg.projection_step_mm > 0.0 ? cfg.projection_step_mm
                                                     : scbct::default_step_mm(vol.grid);
    scbct::ProjectionSet proj = scbct::forward_project(vol, cfg.geometry, step);
    if (cfg.noise_sigma > 0.0 && common.seed_set)
        proj = scbct::add_gaussian_noise(proj, cfg.noise_sigma, cfg.seed);
    fs::create_directories(cfg.output_dir);
    scbct::write_projections(proj, fs::path(cfg.output_dir) / "projections.mha");
    return 0;
}

int cmd_reconstruct(const CommonOpts& common, const std::string& input,
                    const std::string& like, std::vector<int> dims,
                    std::vector<double> spacing) {
    const scbct::PipelineConfig cfg = common.resolve();
    const scbct::ProjectionSet proj = scbct::read_projections(input, cfg.geometry);
    scbct::Grid3 grid;
    if (!like.empty()) {
        grid = scbct::read_volume(like).grid;
    } else {
        if (dims.size() != 3 || spacing.size() != 3)
            throw std::runtime_error(
                "reconstruct: pass --like <volume.mha> or both --dims nx ny nz and "
                "--spacing sx sy sz");
        grid.dims = {dims[0], dims[1], dims[2]};
        grid.spacing = {spacing[0], spacing[1], spacing[2]};
        for (int a = 0; a < 3; ++a)
            grid.origin[a] = -0.5 * (grid.dims[a] - 1) * grid.spacing[a];
    }
    scbct::OssartParams op = cfg.ossart;
    op.step_mm = cfg.projection_step_mm > 0.0 ? cfg.projection_step_mm
                                              : scbct::default_step_mm(grid);
    const scbct::OssartResult rec = scbct::reconstruct(proj, grid, op);
    fs::create_directories(cfg.output_dir);
    scbct::write_metaimage(rec.volume, fs::path(cfg.output_dir) / "recon.mha");
    std::string csv = "epoch,relative_residual\n";
    for (std::size_t e = 0; e < rec.residual_history.size(); ++e)
        csv += std::to_string(e + 1) + "," + std::to_string(rec.residual_history[e]) + "\n";
    scbct::detail::write_text_atomic(fs::path(cfg.output_dir) / "residuals.csv", csv);
    return 0;
}

int cmd_synthesize(const CommonOpts& common, const std::string& pct_path,
                   const std::string& cbct_path, const std::vector<std::string>& mask_args,
                   const std::string& dose_path) {
    const scbct::PipelineConfig cfg = common.resolve();
    scbct::CaseInputs inputs;
    inputs.pct_path = pct_path;
    inputs.cbct_path = cbct_path;
    for (const auto& m : mask_args) {
        const std::size_t eq = m.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == m.size())
            throw std::runtime_error("synthesize: --mask expects name=path, got '" + m + "'");
        inputs.mask_paths.emplace_back(m.substr(0, eq), m.substr(eq + 1));
    }
    if (!dose_path.empty()) inputs.dose_path = dose_path;
    const scbct::CaseResult result = scbct::synthesize_case(inputs, cfg);
    int failures = 0;
    for (const auto& oc : result.outcomes) {
        if (oc.ok) {
            std::cout << "preset " << oc.preset_index << ": ssim=" << oc.report.ssim
                      << " rmse=" << oc.report.rmse << " cc=" << oc.report.cc
                      << " uqi=" << oc.report.uqi << "\n";
        } else {
            std::cerr << "scbct synthesize: " << oc.error << "\n";
            ++failures;
        }
    }
    std::cout << "manifest: " << result.manifest_path.string() << "\n";
    return failures == 0 ? 0 : 1;
}

int cmd_compare(const CommonOpts& common, const std::string& a_path,
                const std::string& b_path) {
    const scbct::Volume3 a = scbct::read_volume(a_path);
    const scbct::Volume3 b = scbct::read_volume(b_path);
    const scbct::SimilarityReport r = scbct::compare_volumes(a, b);
    fs::create_directories(common.output);
    write_json(fs::path(common.output) / "report.json", r.to_json());
    scbct::detail::write_text_atomic(
        fs::path(common.output) / "report.csv",
        scbct::SimilarityReport::csv_header() + "\n" + r.csv_row() + "\n");
    std::cout << "ssim=" << r.ssim << " rmse=" << r.rmse << " cc=" << r.cc
              << " uqi=" << r.uqi << "\n";
    return 0;
}

int cmd_seg_eval(const CommonOpts& common, const std::string& pred_path,
                 const std::string& truth_path, const std::string& dose_path,
                 double volume_cc, bool resample) {
    const scbct::Mask3 pred = scbct::read_mask(pred_path);
    const scbct::Mask3 truth = scbct::read_mask(truth_path);
    scbct::DoseGrid dose;
    const scbct::DoseGrid* dose_ptr = nullptr;
    if (!dose_path.empty()) {
        dose = scbct::read_volume(dose_path);
        dose_ptr = &dose;
    }
    const scbct::SegEvalReport r =
        scbct::evaluate_segmentation(pred, truth, dose_ptr, volume_cc, resample);
    fs::create_directories(common.output);
    write_json(fs::path(common.output) / "seg_report.json", r.to_json());
    scbct::detail::write_text_atomic(
        fs::path(common.output) / "seg_report.csv",
        scbct::SegEvalReport::csv_header() + "\n" + r.csv_row() + "\n");
    std::cout << "dice=" << r.dice << " hd95_mm=" << r.hd95_mm << "\n";
    return 0;
}

int cmd_dose_eval(const CommonOpts& common, const std::string& dose_path,
                  const std::string& pred_path, const std::string& truth_path,
                  const std::string& batch_path, double volume_cc, int dvh_bins) {
    fs::create_directories(common.output);
    if (!batch_path.empty()) {
        std::ifstream in(batch_path);
        if (!in) throw std::runtime_error("dose-eval: cannot open " + batch_path);
        nlohmann::json cases;
        in >> cases;
        if (!cases.is_array() || cases.size() < 2)
            throw std::runtime_error("dose-eval: batch file must list >= 2 cases");
        std::vector<scbct::SegEvalReport> reports;
        std::string csv = scbct::SegEvalReport::csv_header() + "\n";
        for (const auto& c : cases) {
            scbct::detail::check_keys(c, {"dose", "pred", "truth"}, "batch case ");
            const scbct::DoseGrid dose = scbct::read_volume(c.at("dose").get<std::string>());
            const scbct::Mask3 pred = scbct::read_mask(c.at("pred").get<std::string>());
            const scbct::Mask3 truth = scbct::read_mask(c.at("truth").get<std::string>());
            reports.push_back(
                scbct::evaluate_segmentation(pred, truth, &dose, volume_cc, false));
            csv += reports.back().csv_row() + "\n";
        }
        const scbct::DoseAgreement agree = scbct::dose_agreement(reports);
        nlohmann::json j{{"n", agree.mean_dose.n},
                         {"mean_dose",
                          {{"bias", agree.mean_dose.bias},
                           {"sd", agree.mean_dose.sd},
                           {"loa_low", agree.mean_dose.loa_low},
                           {"loa_high", agree.mean_dose.loa_high}}},
                         {"dcc",
                          {{"bias", agree.dcc.bias},
                           {"sd", agree.dcc.sd},
                           {"loa_low", agree.dcc.loa_low},
                           {"loa_high", agree.dcc.loa_high}}}};
        write_json(fs::path(common.output) / "dose_agreement.json", j);
        scbct::detail::write_text_atomic(fs::path(common.output) / "dose_cases.csv", csv);
        std::cout << "mean dose bias=" << agree.mean_dose.bias
                  << " dcc bias=" << agree.dcc.bias << " over " << agree.mean_dose.n
                  << " cases\n";
        return 0;
    }
    if (dose_path.empty() || pred_path.empty() || truth_path.empty())
        throw std::runtime_error("dose-eval: pass --dose/--pred/--truth or --batch");
    const scbct::DoseGrid dose = scbct::read_volume(dose_path);
    const scbct::Mask3 pred = scbct::read_mask(pred_path);
    const scbct::Mask3 truth = scbct::read_mask(truth_path);
    const scbct::SegEvalReport r =
        scbct::evaluate_segmentation(pred, truth, &dose, volume_cc, false);
    write_json(fs::path(common.output) / "dose_report.json", r.to_json());
    auto dvh_csv = [&](const scbct::Mask3& m) {
        const scbct::DvhCurve c = scbct::dvh(dose, m, dvh_bins);
        std::string out = "dose_Gy,volume_cc\n";
        char line[64];
        for (std::size_t i = 0; i < c.dose_edges.size(); ++i) {
            std::snprintf(line, sizeof(line), "%.9g,%.9g\n", c.dose_edges[i], c.volume_cc[i]);
            out += line;
        }
        return out;
    };
    scbct::detail::write_text_atomic(fs::path(common.output) / "dvh_pred.csv", dvh_csv(pred));
    scbct::detail::write_text_atomic(fs::path(common.output) / "dvh_truth.csv",
                                     dvh_csv(truth));
    std::cout << "mean_dose_diff=" << r.mean_dose_diff << " dcc_diff=" << r.dcc_diff << "\n";
    return 0;
}

int cmd_augment(const CommonOpts& common, const std::string& input,
                const std::string& mask_path, const std::string& preset) {
    const std::vector<int> sel = parse_preset_arg(preset, 8, "--preset");
    const scbct::Volume3 vol = scbct::read_volume(input);
    std::optional<scbct::Mask3> mask;
    if (!mask_path.empty()) mask = scbct::read_mask(mask_path);
    const auto specs = scbct::augment_presets();
    fs::create_directories(common.output);
    for (int ai : sel) {
        const scbct::AugmentSpec& spec = specs[ai - 1];
        auto [avol, amask] = scbct::apply_augment(vol, mask, spec);
        const std::string stem = "augment" + std::to_string(ai) + "_" + spec.name;
        scbct::write_metaimage(avol, fs::path(common.output) / (stem + ".mha"));
        if (amask)
            scbct::write_metaimage(*amask, fs::path(common.output) / (stem + "_mask.mha"));
    }
    return 0;
}

int cmd_manifest(const CommonOpts& common, const std::vector<std::string>& cases) {
    scbct::PipelineConfig base =
        common.profile == "clinical" ? scbct::clinical_config() : scbct::desk_config();
    const scbct::PipelineConfig cfg =
        common.config_path.empty() ? base
                                   : scbct::PipelineConfig::load(common.config_path, base);
    std::vector<fs::path> paths(cases.begin(), cases.end());
    const scbct::TrainingManifest tm =
        scbct::build_training_manifest(paths, cfg.augments, common.output);
    std::cout << tm.entries.size() << " training pairs -> " << tm.manifest_path.string()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"physics-based synthetic CBCT toolkit"};
    app.require_subcommand(1);

    CommonOpts extract_o, induce_o, project_o, reconstruct_o, synth_o, compare_o, seg_o,
        dose_o, aug_o, man_o;

    auto* s_extract = app.add_subcommand("extract", "windowed artifact fields from a CBCT");
    std::string extract_input;
    s_extract->add_option("--input", extract_input, "CBCT volume (.mha)")
        ->required()
        ->check(CLI::ExistingFile);
    extract_o.attach(s_extract);

    auto* s_induce = app.add_subcommand("induce", "inject extracted artifacts into a pCT");
    std::string induce_pct, induce_cbct;
    s_induce->add_option("--pct", induce_pct)->required()->check(CLI::ExistingFile);
    s_induce->add_option("--cbct", induce_cbct)->required()->check(CLI::ExistingFile);
    induce_o.attach(s_induce);

    auto* s_project = app.add_subcommand("project", "cone-beam forward projection");
    std::string project_input;
    s_project->add_option("--input", project_input)->required()->check(CLI::ExistingFile);
    project_o.attach(s_project, false);

    auto* s_recon = app.add_subcommand("reconstruct", "OS-SART reconstruction");
    std::string recon_input, recon_like;
    std::vector<int> recon_dims;
    std::vector<double> recon_spacing;
    s_recon->add_option("--input", recon_input, "projection stack (.mha)")
        ->required()
        ->check(CLI::ExistingFile);
    s_recon->add_option("--like", recon_like, "take the output grid from this volume")
        ->check(CLI::ExistingFile);
    s_recon->add_option("--dims", recon_dims, "output dims nx ny nz")->expected(3);
    s_recon->add_option("--spacing", recon_spacing, "output spacing sx sy sz (mm)")
        ->expected(3);
    reconstruct_o.attach(s_recon, false);

    auto* s_synth = app.add_subcommand("synthesize", "full pCT -> sCBCT chain per preset");
    std::string synth_pct, synth_cbct, synth_dose;
    std::vector<std::string> synth_masks;
    s_synth->add_option("--pct", synth_pct)->required()->check(CLI::ExistingFile);
    s_synth->add_option("--cbct", synth_cbct)->required()->check(CLI::ExistingFile);
    s_synth->add_option("--mask", synth_masks, "named mask as name=path (repeatable)");
    s_synth->add_option("--dose", synth_dose)->check(CLI::ExistingFile);
    synth_o.attach(s_synth);

    auto* s_compare = app.add_subcommand("compare", "similarity metrics of two volumes");
    std::string compare_a, compare_b;
    s_compare->add_option("a", compare_a, "first volume")->required()->check(CLI::ExistingFile);
    s_compare->add_option("b", compare_b, "second volume")
        ->required()
        ->check(CLI::ExistingFile);
    compare_o.attach(s_compare, false);

    auto* s_seg = app.add_subcommand("seg-eval", "Dice/HD95 and dose metrics for two masks");
    std::string seg_pred, seg_truth, seg_dose;
    double seg_cc = 5.0;
    bool seg_resample = false;
    s_seg->add_option("--pred", seg_pred)->required()->check(CLI::ExistingFile);
    s_seg->add_option("--truth", seg_truth)->required()->check(CLI::ExistingFile);
    s_seg->add_option("--dose", seg_dose)->check(CLI::ExistingFile);
    s_seg->add_option("--volume-cc", seg_cc, "D_cc query volume (default 5)");
    s_seg->add_flag("--resample", seg_resample, "resample pred onto the truth grid");
    seg_o.attach(s_seg, false);

    auto* s_dose = app.add_subcommand("dose-eval", "dose metrics, DVH and batch agreement");
    std::string dose_dose, dose_pred, dose_truth, dose_batch;
    double dose_cc = 5.0;
    int dose_bins = 100;
    s_dose->add_option("--dose", dose_dose)->check(CLI::ExistingFile);
    s_dose->add_option("--pred", dose_pred)->check(CLI::ExistingFile);
    s_dose->add_option("--truth", dose_truth)->check(CLI::ExistingFile);
    s_dose->add_option("--batch", dose_batch, "JSON list of {dose,pred,truth} cases")
        ->check(CLI::ExistingFile);
    s_dose->add_option("--volume-cc", dose_cc);
    s_dose->add_option("--dvh-bins", dose_bins);
    dose_o.attach(s_dose, false);

    auto* s_aug = app.add_subcommand("augment", "stock augmentations of a volume (+mask)");
    std::string aug_input, aug_mask, aug_preset = "all";
    s_aug->add_option("--input", aug_input)->required()->check(CLI::ExistingFile);
    s_aug->add_option("--mask", aug_mask)->check(CLI::ExistingFile);
    s_aug->add_option("--preset", aug_preset, "augment preset index 1..8 or 'all'");
    aug_o.attach(s_aug, false);

    auto* s_man = app.add_subcommand("manifest", "training dataset from case manifests");
    std::vector<std::string> man_cases;
    s_man->add_option("cases", man_cases, "case manifest.json paths")
        ->required()
        ->check(CLI::ExistingFile);
    man_o.attach(s_man, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (s_extract->parsed()) return cmd_extract(extract_o, extract_input);
        if (s_induce->parsed()) return cmd_induce(induce_o, induce_pct, induce_cbct);
        if (s_project->parsed()) return cmd_project(project_o, project_input);
        if (s_recon->parsed())
            return cmd_reconstruct(reconstruct_o, recon_input, recon_like, recon_dims,
                                   recon_spacing);
        if (s_synth->parsed())
            return cmd_synthesize(synth_o, synth_pct, synth_cbct, synth_masks, synth_dose);
        if (s_compare->parsed()) return cmd_compare(compare_o, compare_a, compare_b);
        if (s_seg->parsed())
            return cmd_seg_eval(seg_o, seg_pred, seg_truth, seg_dose, seg_cc, seg_resample);
        if (s_dose->parsed())
            return cmd_dose_eval(dose_o, dose_dose, dose_pred, dose_truth, dose_batch,
                                 dose_cc, dose_bins);
        if (s_aug->parsed()) return cmd_augment(aug_o, aug_input, aug_mask, aug_preset);
        if (s_man->parsed()) return cmd_manifest(man_o, man_cases);
    } catch (const std::exception& e) {
        std::cerr << "scbct: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
