#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scbct/augment.hpp"
#include "scbct/imqual.hpp"
#include "scbct/metaimage.hpp"
#include "scbct/ossart.hpp"
#include "scbct/plahe.hpp"
#include "scbct/projector.hpp"
#include "scbct/segdose.hpp"
#include "scbct/volume.hpp"

namespace scbct {

namespace detail {

inline std::uint64_t fnv1a64(const char* data, std::size_t n) {
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("digest: cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    atomic_write(path, [&](std::ostream& out) { out << text; });
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    if (!j.is_object())
        throw std::runtime_error("config: expected an object at " + where);
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw std::runtime_error("config: unknown key '" + where + item.key() + "'");
    }
}

template <typename T>
void opt_get(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("stage ") + stage + ": " + e.what());
    }
}

}  // namespace detail

struct CaseInputs {
    std::filesystem::path pct_path;
    std::filesystem::path cbct_path;
    std::vector<std::pair<std::string, std::filesystem::path>> mask_paths;
    std::optional<std::filesystem::path> dose_path;
};

/// Every knob of the synthesis chain. Serializes to a strict-keyed JSON config
/// file; unknown keys are rejected, absent keys keep their defaults.
struct PipelineConfig {
    std::vector<int> presets{1, 2, 3, 4, 5, 6, 7};  // 1-based artifact presets
    std::array<int, 3> plahe_window{5, 5, 5};
    std::string extraction_mode = "auto";  // auto | direct | residual
    double induction_lambda = 1.0;
    ConeBeamGeometry geometry = desk_geometry();
    double projection_step_mm = 0.0;  // 0 selects default_step_mm of the grid
    double noise_sigma = 0.01;
    std::uint64_t seed = 0;
    OssartParams ossart;
    std::vector<int> augments{1, 2, 3, 4, 5, 6, 7, 8};  // 1-based augment presets
    std::string output_dir = "out";

    void validate() const {
        if (presets.empty()) throw std::invalid_argument("config: presets must be non-empty");
        for (std::size_t i = 0; i < presets.size(); ++i) {
            if (presets[i] < 1 || presets[i] > 7)
                throw std::invalid_argument("config: presets must lie in 1..7");
            for (std::size_t k = 0; k < i; ++k)
                if (presets[k] == presets[i])
                    throw std::invalid_argument("config: duplicate preset index");
        }
        for (std::size_t i = 0; i < augments.size(); ++i) {
            if (augments[i] < 1 || augments[i] > 8)
                throw std::invalid_argument("config: augments must lie in 1..8");
            for (std::size_t k = 0; k < i; ++k)
                if (augments[k] == augments[i])
                    throw std::invalid_argument("config: duplicate augment index");
        }
        for (int w : plahe_window)
            if (w < 1 || w % 2 == 0)
                throw std::invalid_argument("config: plahe window extents must be odd and >= 1");
        if (extraction_mode != "auto" && extraction_mode != "direct" &&
            extraction_mode != "residual")
            throw std::invalid_argument("config: extraction_mode must be auto|direct|residual");
        if (!std::isfinite(induction_lambda))
            throw std::invalid_argument("config: induction_lambda must be finite");
        geometry.validate();
        if (projection_step_mm < 0.0)
            throw std::invalid_argument("config: projection_step_mm must be >= 0");
        if (noise_sigma < 0.0) throw std::invalid_argument("config: noise sigma must be >= 0");
        ossart.validate(geometry.n_views());
        if (output_dir.empty()) throw std::invalid_argument("config: output_dir must be set");
    }

    nlohmann::json to_json() const {
        return {{"presets", presets},
                {"plahe",
                 {{"window", plahe_window}, {"extraction_mode", extraction_mode}}},
                {"induction_lambda", induction_lambda},
                {"geometry",
                 {{"dsd", geometry.dsd},
                  {"dso", geometry.dso},
                  {"det_rows", geometry.det_rows},
                  {"det_cols", geometry.det_cols},
                  {"pixel_size", geometry.pixel_size},
                  {"center_offset", geometry.center_offset},
                  {"n_views", geometry.n_views()}}},
                {"projection_step_mm", projection_step_mm},
                {"noise", {{"sigma", noise_sigma}, {"seed", seed}}},
                {"ossart",
                 {{"lambda", ossart.lambda},
                  {"n_subsets", ossart.n_subsets},
                  {"n_epochs", ossart.n_epochs},
                  {"nonnegativity", ossart.nonnegativity},
                  {"epsilon", ossart.epsilon}}},
                {"augments", augments},
                {"output_dir", output_dir}};
    }

    static PipelineConfig from_json(const nlohmann::json& j) {
        return from_json(j, PipelineConfig{});
    }

    /// Parses over `base` so a config file can override a profile's defaults.
    static PipelineConfig from_json(const nlohmann::json& j, PipelineConfig base) {
        detail::check_keys(j,
                           {"presets", "plahe", "induction_lambda", "geometry",
                            "projection_step_mm", "noise", "ossart", "augments",
                            "output_dir"},
                           "");
        PipelineConfig c = std::move(base);
        detail::opt_get(j, "presets", c.presets);
        if (j.contains("plahe")) {
            const auto& p = j.at("plahe");
            detail::check_keys(p, {"window", "extraction_mode"}, "plahe.");
            detail::opt_get(p, "window", c.plahe_window);
            detail::opt_get(p, "extraction_mode", c.extraction_mode);
        }
        detail::opt_get(j, "induction_lambda", c.induction_lambda);
        if (j.contains("geometry")) {
            const auto& g = j.at("geometry");
            detail::check_keys(g,
                               {"dsd", "dso", "det_rows", "det_cols", "pixel_size",
                                "center_offset", "n_views"},
                               "geometry.");
            detail::opt_get(g, "dsd", c.geometry.dsd);
            detail::opt_get(g, "dso", c.geometry.dso);
            detail::opt_get(g, "det_rows", c.geometry.det_rows);
            detail::opt_get(g, "det_cols", c.geometry.det_cols);
            detail::opt_get(g, "pixel_size", c.geometry.pixel_size);
            detail::opt_get(g, "center_offset", c.geometry.center_offset);
            int n_views = c.geometry.n_views();
            detail::opt_get(g, "n_views", n_views);
            c.geometry.angles = uniform_angles(n_views);
        }
        detail::opt_get(j, "projection_step_mm", c.projection_step_mm);
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            detail::check_keys(n, {"sigma", "seed"}, "noise.");
            detail::opt_get(n, "sigma", c.noise_sigma);
            detail::opt_get(n, "seed", c.seed);
        }
        if (j.contains("ossart")) {
            const auto& o = j.at("ossart");
            detail::check_keys(o, {"lambda", "n_subsets", "n_epochs", "nonnegativity", "epsilon"},
                               "ossart.");
            detail::opt_get(o, "lambda", c.ossart.lambda);
            detail::opt_get(o, "n_subsets", c.ossart.n_subsets);
            detail::opt_get(o, "n_epochs", c.ossart.n_epochs);
            detail::opt_get(o, "nonnegativity", c.ossart.nonnegativity);
            detail::opt_get(o, "epsilon", c.ossart.epsilon);
        }
        detail::opt_get(j, "augments", c.augments);
        detail::opt_get(j, "output_dir", c.output_dir);
        return c;
    }

    static PipelineConfig load(const std::filesystem::path& path) {
        return load(path, PipelineConfig{});
    }

    static PipelineConfig load(const std::filesystem::path& path, PipelineConfig base) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw std::runtime_error("config: parse error in " + path.string() + ": " + e.what());
        }
        return from_json(j, std::move(base));
    }
};

inline PipelineConfig desk_config() { return {}; }

inline PipelineConfig clinical_config() {
    PipelineConfig c;
    c.geometry = clinical_geometry();
    return c;
}

struct PresetOutcome {
    int preset_index = 0;
    double alpha = 0.0, beta = 0.0;
    std::string extraction_mode;
    bool ok = false;
    std::string error;
    std::filesystem::path scbct_path;
    std::vector<std::pair<std::string, std::filesystem::path>> mask_paths;
    SimilarityReport report;
    std::vector<double> residual_history;
};

struct CaseResult {
    std::filesystem::path manifest_path;
    nlohmann::json manifest;
    std::vector<PresetOutcome> outcomes;
    Grid3 cropped_grid;
};

/// Runs the full synthesis chain for every configured artifact preset:
/// CBCT -> pCT-lattice resample -> FOV crop -> normalize -> artifact
/// extraction -> induction into the pCT -> projection -> noise ->
/// reconstruction, then scores each result against the cropped CBCT. A preset
/// failure is recorded in the manifest and leaves no partial files behind.
inline CaseResult synthesize_case(const CaseInputs& inputs, const PipelineConfig& config) {
    namespace fs = std::filesystem;
    config.validate();
    const fs::path out_dir = config.output_dir;
    fs::create_directories(out_dir / "reference");

    Volume3 pct = detail::run_stage("load_inputs", [&] { return read_volume(inputs.pct_path); });
    Volume3 cbct =
        detail::run_stage("load_inputs", [&] { return read_volume(inputs.cbct_path); });
    std::vector<std::pair<std::string, Mask3>> masks;
    for (const auto& [name, path] : inputs.mask_paths) {
        Mask3 m = detail::run_stage("load_inputs", [&] { return read_mask(path); });
        if (!m.grid.same_as(pct.grid))
            m = detail::run_stage("resample_mask", [&] { return resample_to_grid(m, pct.grid); });
        masks.emplace_back(name, std::move(m));
    }

    const Grid3 target = detail::run_stage(
        "resample_cbct", [&] { return lattice_overlap_grid(pct.grid, cbct.grid); });
    const Volume3 cbct_rs = detail::run_stage(
        "resample_cbct", [&] { return resample_to_grid(cbct, target, Interp::kTrilinear); });
    FovCrop crop =
        detail::run_stage("crop_overlap_fov", [&] { return crop_overlap_fov(pct, cbct_rs); });
    const Volume3& pct_crop = crop.ref;
    std::vector<std::pair<std::string, Mask3>> masks_crop;
    for (const auto& [name, m] : masks)
        masks_crop.emplace_back(name, crop_to_region(m, crop.region));

    const Volume3 cbct_norm =
        detail::run_stage("normalize", [&] { return rescale_unit(crop.other); });
    const auto [pct_lo, pct_hi] = value_range(pct_crop);
    if (!(pct_hi > pct_lo))
        throw std::runtime_error("stage normalize: constant pCT after cropping");
    const double pct_range = static_cast<double>(pct_hi) - pct_lo;

    write_metaimage(pct_crop, out_dir / "reference" / "pct_cropped.mha");
    write_metaimage(cbct_norm, out_dir / "reference" / "cbct_cropped.mha");

    const double step = config.projection_step_mm > 0.0 ? config.projection_step_mm
                                                        : default_step_mm(pct_crop.grid);

    CaseResult result;
    result.cropped_grid = pct_crop.grid;
    for (int pi : config.presets) {
        PresetOutcome oc;
        oc.preset_index = pi;
        const AlphaBeta ab = plahe_presets()[pi - 1];
        oc.alpha = ab.alpha;
        oc.beta = ab.beta;
        PlaheParams pp;
        pp.alpha = ab.alpha;
        pp.beta = ab.beta;
        pp.window = config.plahe_window;
        pp.extraction_mode = config.extraction_mode == "direct" ? ExtractionMode::kDirect
                             : config.extraction_mode == "residual"
                                 ? ExtractionMode::kResidual
                                 : default_extraction_mode();
        oc.extraction_mode =
            pp.extraction_mode == ExtractionMode::kDirect ? "direct" : "residual";
        const std::uint64_t preset_seed = config.seed + static_cast<std::uint64_t>(pi);
        const fs::path preset_dir = out_dir / ("preset" + std::to_string(pi));

        try {
            Volume3 artifact = detail::run_stage(
                "extract_artifact", [&] { return extract_artifact(cbct_norm, pp); });
            detail::run_stage("denormalize_artifact", [&] {
                for (auto& v : artifact.values) v = static_cast<float>(v * pct_range);
                return 0;
            });
            Volume3 induced = detail::run_stage("add_scaled", [&] {
                return add_scaled(pct_crop, artifact, config.induction_lambda);
            });
            induced = detail::run_stage("rescale_unit", [&] { return rescale_unit(induced); });
            ProjectionSet proj = detail::run_stage("forward_project", [&] {
                return forward_project(induced, config.geometry, step);
            });
            proj = detail::run_stage("add_noise", [&] {
                return add_gaussian_noise(proj, config.noise_sigma, preset_seed);
            });
            OssartParams op = config.ossart;
            op.step_mm = step;
            OssartResult rec = detail::run_stage(
                "reconstruct", [&] { return reconstruct(proj, induced.grid, op); });
            oc.residual_history = std::move(rec.residual_history);

            detail::run_stage("write_outputs", [&] {
                fs::create_directories(preset_dir);
                write_metaimage(rec.volume, preset_dir / "scbct.mha");
                for (const auto& [name, m] : masks_crop) {
                    const fs::path mp = preset_dir / ("mask_" + name + ".mha");
                    write_metaimage(m, mp);
                    oc.mask_paths.emplace_back(name, mp);
                }
                return 0;
            });
            oc.scbct_path = preset_dir / "scbct.mha";
            oc.report = detail::run_stage(
                "compare", [&] { return compare_volumes(rec.volume, cbct_norm); });
            oc.report.preset_index = pi;
            {
                char params[64];
                std::snprintf(params, sizeof(params), "alpha=%g;beta=%g", ab.alpha, ab.beta);
                oc.report.params = params;
            }
            oc.ok = true;
        } catch (const std::exception& e) {
            oc.ok = false;
            oc.error = "preset " + std::to_string(pi) + ": " + e.what();
            std::error_code ec;
            fs::remove_all(preset_dir, ec);
        }
        result.outcomes.push_back(std::move(oc));
    }

    // similarity rows for the presets that completed
    std::string csv = SimilarityReport::csv_header() + "\n";
    for (const auto& oc : result.outcomes)
        if (oc.ok) csv += oc.report.csv_row() + "\n";
    detail::write_text_atomic(out_dir / "report.csv", csv);

    nlohmann::json jmasks = nlohmann::json::array();
    for (const auto& [name, path] : inputs.mask_paths)
        jmasks.push_back({{"name", name},
                          {"file", path.filename().string()},
                          {"digest", detail::file_digest(path)}});
    nlohmann::json params_json = config.to_json();
    params_json.erase("output_dir");

    nlohmann::json jrecords = nlohmann::json::array();
    for (const auto& oc : result.outcomes) {
        nlohmann::json r{{"preset_index", oc.preset_index},
                         {"alpha", oc.alpha},
                         {"beta", oc.beta},
                         {"extraction_mode", oc.extraction_mode},
                         {"noise_seed", config.seed + static_cast<std::uint64_t>(oc.preset_index)},
                         {"status", oc.ok ? "ok" : "failed"}};
        if (oc.ok) {
            const std::string rel = "preset" + std::to_string(oc.preset_index);
            nlohmann::json jm = nlohmann::json::array();
            for (const auto& [name, path] : oc.mask_paths)
                jm.push_back({{"name", name},
                              {"path", rel + "/" + path.filename().string()},
                              {"digest", detail::file_digest(path)}});
            r["outputs"] = {{"scbct",
                             {{"path", rel + "/scbct.mha"},
                              {"digest", detail::file_digest(oc.scbct_path)}}},
                            {"masks", jm}};
            r["report"] = oc.report.to_json();
            r["residual_history"] = oc.residual_history;
        } else {
            r["error"] = oc.error;
        }
        jrecords.push_back(std::move(r));
    }

    result.manifest = {
        {"format", "scbct-case-manifest-v1"},
        {"inputs",
         {{"pct",
           {{"file", inputs.pct_path.filename().string()},
            {"digest", detail::file_digest(inputs.pct_path)}}},
          {"cbct",
           {{"file", inputs.cbct_path.filename().string()},
            {"digest", detail::file_digest(inputs.cbct_path)}}},
          {"masks", jmasks}}},
        {"parameters", std::move(params_json)},
        {"reference",
         {{"pct_cropped",
           {{"path", "reference/pct_cropped.mha"},
            {"digest", detail::file_digest(out_dir / "reference" / "pct_cropped.mha")}}},
          {"cbct_cropped",
           {{"path", "reference/cbct_cropped.mha"},
            {"digest", detail::file_digest(out_dir / "reference" / "cbct_cropped.mha")}}}}},
        {"reports", {{"csv", {{"path", "report.csv"},
                              {"digest", detail::file_digest(out_dir / "report.csv")}}}}},
        {"records", std::move(jrecords)}};

    result.manifest_path = out_dir / "manifest.json";
    detail::write_text_atomic(result.manifest_path, result.manifest.dump(2) + "\n");
    return result;
}

struct SegEvalReport {
    double dice = 0.0;
    double hd95_mm = 0.0;
    bool has_dose = false;
    double volume_cc_query = 5.0;
    double mean_dose_pred = 0.0, mean_dose_truth = 0.0, mean_dose_diff = 0.0;
    double dcc_pred = 0.0, dcc_truth = 0.0, dcc_diff = 0.0;

    static std::string csv_header() {
        return "dice,hd95_mm,mean_dose_pred,mean_dose_truth,mean_dose_diff,"
               "dcc_pred,dcc_truth,dcc_diff";
    }
    std::string csv_row() const {
        char buf[256];
        if (has_dose)
            std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", dice,
                          hd95_mm, mean_dose_pred, mean_dose_truth, mean_dose_diff, dcc_pred,
                          dcc_truth, dcc_diff);
        else
            std::snprintf(buf, sizeof(buf), "%.9g,%.9g,,,,,,", dice, hd95_mm);
        return buf;
    }
    nlohmann::json to_json() const {
        nlohmann::json j{{"dice", dice}, {"hd95_mm", hd95_mm}};
        if (has_dose) {
            j["volume_cc"] = volume_cc_query;
            j["mean_dose"] = {{"pred", mean_dose_pred},
                              {"truth", mean_dose_truth},
                              {"diff", mean_dose_diff}};
            j["dcc"] = {{"pred", dcc_pred}, {"truth", dcc_truth}, {"diff", dcc_diff}};
        }
        return j;
    }
};

/// Dice + HD95, and when a dose grid is supplied the mean dose and D_cc seen
/// through each contour plus their differences. `resample` permits a predicted
/// mask on a different lattice (nearest-neighbor onto the truth grid).
inline SegEvalReport evaluate_segmentation(const Mask3& pred, const Mask3& truth,
                                           const DoseGrid* dose = nullptr,
                                           double volume_cc = 5.0, bool resample = false) {
    Mask3 pred_on_truth;
    const Mask3* p = &pred;
    if (!pred.grid.same_as(truth.grid)) {
        if (!resample)
            throw std::invalid_argument(
                "evaluate_segmentation: grid mismatch (enable resampling)");
        pred_on_truth = resample_to_grid(pred, truth.grid);
        p = &pred_on_truth;
    }
    SegEvalReport r;
    r.dice = dice(*p, truth);
    r.hd95_mm = hd95(*p, truth);
    if (dose) {
        r.has_dose = true;
        r.volume_cc_query = volume_cc;
        r.mean_dose_pred = mean_dose(*dose, *p);
        r.mean_dose_truth = mean_dose(*dose, truth);
        r.mean_dose_diff = r.mean_dose_pred - r.mean_dose_truth;
        r.dcc_pred = d_cc(*dose, *p, volume_cc);
        r.dcc_truth = d_cc(*dose, truth, volume_cc);
        r.dcc_diff = r.dcc_pred - r.dcc_truth;
    }
    return r;
}

struct DoseAgreement {
    BlandAltmanStats mean_dose;
    BlandAltmanStats dcc;
};

/// Bland-Altman agreement of predicted vs ground-truth dose metrics across a
/// batch of evaluated cases.
inline DoseAgreement dose_agreement(const std::vector<SegEvalReport>& cases) {
    std::vector<std::array<double, 2>> mean_pairs, dcc_pairs;
    for (const auto& c : cases) {
        if (!c.has_dose)
            throw std::invalid_argument("dose_agreement: case without dose metrics");
        mean_pairs.push_back({c.mean_dose_pred, c.mean_dose_truth});
        dcc_pairs.push_back({c.dcc_pred, c.dcc_truth});
    }
    return {bland_altman(mean_pairs), bland_altman(dcc_pairs)};
}

struct TrainingEntry {
    std::string image;  // relative to the training manifest directory
    std::string mask;
    nlohmann::json provenance;
};

struct TrainingManifest {
    std::filesystem::path manifest_path;
    std::vector<TrainingEntry> entries;
    nlohmann::json json;
};

/// Expands synthesized cases into a training dataset: one base pair per
/// completed preset plus one pair per selected augmentation, every file written
/// under out_dir/aug and the whole listing in training_manifest.json.
inline TrainingManifest build_training_manifest(
    const std::vector<std::filesystem::path>& case_manifest_paths,
    const std::vector<int>& augment_selection, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    for (int a : augment_selection)
        if (a < 1 || a > 8)
            throw std::invalid_argument("build_training_manifest: augment index outside 1..8");
    const auto specs = augment_presets();
    fs::create_directories(out_dir / "aug");

    TrainingManifest tm;
    nlohmann::json jentries = nlohmann::json::array();
    auto add_entry = [&](std::string image, std::string mask, nlohmann::json prov) {
        jentries.push_back(
            {{"image", image}, {"mask", mask}, {"provenance", prov}});
        tm.entries.push_back({std::move(image), std::move(mask), std::move(prov)});
    };

    for (std::size_t ci = 0; ci < case_manifest_paths.size(); ++ci) {
        const fs::path mpath = case_manifest_paths[ci];
        std::ifstream in(mpath);
        if (!in)
            throw std::runtime_error("build_training_manifest: cannot open " + mpath.string());
        nlohmann::json m;
        in >> m;
        const fs::path case_dir = fs::absolute(mpath).parent_path();
        const std::string case_rel = fs::relative(mpath, fs::absolute(out_dir)).string();

        for (const auto& rec : m.at("records")) {
            if (rec.at("status") != "ok") continue;
            const int pi = rec.at("preset_index");
            const fs::path img_abs = case_dir / rec.at("outputs").at("scbct").at("path");
            const auto& jm = rec.at("outputs").at("masks");
            if (jm.empty())
                throw std::runtime_error("build_training_manifest: record without masks");
            const fs::path mask_abs = case_dir / jm.at(0).at("path");

            nlohmann::json prov{{"case_manifest", case_rel},
                                {"preset_index", pi},
                                {"alpha", rec.at("alpha")},
                                {"beta", rec.at("beta")},
                                {"augment", nullptr}};
            add_entry(fs::relative(img_abs, fs::absolute(out_dir)).string(),
                      fs::relative(mask_abs, fs::absolute(out_dir)).string(), prov);

            if (augment_selection.empty()) continue;
            const Volume3 vol = read_volume(img_abs);
            const std::optional<Mask3> mask = read_mask(mask_abs);
            for (int ai : augment_selection) {
                const AugmentSpec& spec = specs[ai - 1];
                Volume3 vin = vol;
                if (spec.kind == AugmentKind::kSigmoidContrast)
                    for (auto& v : vin.values) v = std::clamp(v, 0.0f, 1.0f);
                auto [avol, amask] = apply_augment(vin, mask, spec);
                char stem[128];
                std::snprintf(stem, sizeof(stem), "c%zu_p%d_%s", ci, pi, spec.name.c_str());
                const std::string img_rel = std::string("aug/") + stem + "_image.mha";
                const std::string mask_rel = std::string("aug/") + stem + "_mask.mha";
                write_metaimage(avol, out_dir / img_rel);
                write_metaimage(*amask, out_dir / mask_rel);
                nlohmann::json aprov = prov;
                aprov["augment"] = spec.name;
                add_entry(img_rel, mask_rel, std::move(aprov));
            }
        }
    }

    tm.json = {{"format", "scbct-training-manifest-v1"}, {"entries", std::move(jentries)}};
    tm.manifest_path = out_dir / "training_manifest.json";
    detail::write_text_atomic(tm.manifest_path, tm.json.dump(2) + "\n");
    return tm;
}

}  // namespace scbct
