#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scbct/volume.hpp"

namespace scbct {

enum class AugmentKind { kSharpen, kSigmoidContrast, kAffine };

struct AugmentSpec {
    AugmentKind kind = AugmentKind::kSharpen;
    // affine
    double scale = 1.0;
    double rotate_deg = 0.0;
    double shear_deg = 0.0;
    // intensity
    double amount = 1.0;  // sharpen
    double gain = 10.0;   // sigmoid
    double cutoff = 0.5;  // sigmoid
    std::string name = "sharpen";

    void validate() const {
        if (kind == AugmentKind::kAffine && !(scale > 0.0))
            throw std::invalid_argument("augment: scale must be > 0");
        if (kind == AugmentKind::kSharpen && amount < 0.0)
            throw std::invalid_argument("augment: amount must be >= 0");
    }
};

/// The eight stock augmentations: unsharp sharpening, sigmoid contrast, four
/// scale/rotation affines and two in-plane shears.
inline std::vector<AugmentSpec> augment_presets() {
    auto affine = [](double s, double rot, double shear, std::string name) {
        AugmentSpec a;
        a.kind = AugmentKind::kAffine;
        a.scale = s;
        a.rotate_deg = rot;
        a.shear_deg = shear;
        a.name = std::move(name);
        return a;
    };
    AugmentSpec sharpen;
    sharpen.kind = AugmentKind::kSharpen;
    sharpen.amount = 1.0;
    sharpen.name = "sharpen";
    AugmentSpec sigmoid;
    sigmoid.kind = AugmentKind::kSigmoidContrast;
    sigmoid.gain = 10.0;
    sigmoid.cutoff = 0.5;
    sigmoid.name = "sigmoid";
    return {sharpen,
            sigmoid,
            affine(1.3, 10.0, 0.0, "affine_up_rot+10"),
            affine(1.3, -10.0, 0.0, "affine_up_rot-10"),
            affine(0.8, 10.0, 0.0, "affine_down_rot+10"),
            affine(0.8, -10.0, 0.0, "affine_down_rot-10"),
            affine(1.0, 0.0, 20.0, "shear+20"),
            affine(1.0, 0.0, -20.0, "shear-20")};
}

/// vol + amount * (vol - boxmean3(vol)), 3^3 window truncated at borders.
inline Volume3 sharpen(const Volume3& vol, double amount) {
    if (amount < 0.0) throw std::invalid_argument("sharpen: amount must be >= 0");
    vol.validate();
    const auto& d = vol.grid.dims;
    Volume3 out = Volume3::zeros(vol.grid);
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                double sum = 0.0;
                int n = 0;
                for (int dk = std::max(k - 1, 0); dk <= std::min(k + 1, d[2] - 1); ++dk)
                    for (int dj = std::max(j - 1, 0); dj <= std::min(j + 1, d[1] - 1); ++dj)
                        for (int di = std::max(i - 1, 0); di <= std::min(i + 1, d[0] - 1);
                             ++di) {
                            sum += vol.values[vol.grid.index(di, dj, dk)];
                            ++n;
                        }
                const std::size_t idx = vol.grid.index(i, j, k);
                const double v = vol.values[idx];
                out.values[idx] = static_cast<float>(v + amount * (v - sum / n));
            }
    return out;
}

inline Volume3 sigmoid_contrast(const Volume3& vol, double gain, double cutoff) {
    vol.validate();
    Volume3 out = Volume3::zeros(vol.grid);
    for (std::size_t i = 0; i < vol.values.size(); ++i) {
        const float v = vol.values[i];
        if (!(v >= 0.0f && v <= 1.0f))
            throw std::invalid_argument("sigmoid_contrast: values outside [0,1]");
        out.values[i] = static_cast<float>(1.0 / (1.0 + std::exp(-gain * (v - cutoff))));
    }
    return out;
}

namespace detail {

// Forward affine matrix scale * Rz(rotate) * Shxy(shear); shear maps
// x += tan(shear) * y.
inline std::array<std::array<double, 3>, 3> affine_matrix(const AugmentSpec& spec) {
    const double th = spec.rotate_deg * M_PI / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double sh = std::tan(spec.shear_deg * M_PI / 180.0);
    const double sc = spec.scale;
    // Rz * Sh
    return {{{sc * c, sc * (c * sh - s), 0.0},
             {sc * s, sc * (s * sh + c), 0.0},
             {0.0, 0.0, sc}}};
}

inline std::array<std::array<double, 3>, 3> invert3(
    const std::array<std::array<double, 3>, 3>& m) {
    const double det =
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
        m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
        m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (std::abs(det) < 1e-300) throw std::invalid_argument("augment: singular transform");
    const double id = 1.0 / det;
    std::array<std::array<double, 3>, 3> inv;
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * id;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * id;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * id;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * id;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * id;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * id;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * id;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * id;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * id;
    return inv;
}

}  // namespace detail

/// Resamples on the input grid through the inverse of the spec's affine map,
/// taken about the volume's physical center. Volume values are trilinear,
/// masks nearest-neighbor.
inline std::pair<Volume3, std::optional<Mask3>> affine_transform(
    const Volume3& vol, const std::optional<Mask3>& mask, const AugmentSpec& spec) {
    if (spec.kind != AugmentKind::kAffine)
        throw std::invalid_argument("affine_transform: spec is not affine");
    spec.validate();
    vol.validate();
    if (mask && !mask->grid.same_as(vol.grid))
        throw std::invalid_argument("affine_transform: mask grid mismatch");

    const auto inv = detail::invert3(detail::affine_matrix(spec));
    const auto& d = vol.grid.dims;
    const auto& sp = vol.grid.spacing;
    Volume3 out = Volume3::zeros(vol.grid);
    std::optional<Mask3> mout;
    if (mask) {
        mout.emplace();
        mout->grid = mask->grid;
        mout->values.assign(mask->values.size(), 0);
    }

    std::array<double, 3> half{0.5 * (d[0] - 1), 0.5 * (d[1] - 1), 0.5 * (d[2] - 1)};
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const double ox = (i - half[0]) * sp[0];
                const double oy = (j - half[1]) * sp[1];
                const double oz = (k - half[2]) * sp[2];
                const double qx = inv[0][0] * ox + inv[0][1] * oy + inv[0][2] * oz;
                const double qy = inv[1][0] * ox + inv[1][1] * oy + inv[1][2] * oz;
                const double qz = inv[2][0] * ox + inv[2][1] * oy + inv[2][2] * oz;
                const double fx = detail::snap_index(qx / sp[0] + half[0]);
                const double fy = detail::snap_index(qy / sp[1] + half[1]);
                const double fz = detail::snap_index(qz / sp[2] + half[2]);
                const std::size_t idx = vol.grid.index(i, j, k);
                out.values[idx] = static_cast<float>(
                    detail::tri_sample(vol.values.data(), d, fx, fy, fz));
                if (mout) {
                    const int ni = static_cast<int>(std::lround(fx));
                    const int nj = static_cast<int>(std::lround(fy));
                    const int nk = static_cast<int>(std::lround(fz));
                    if (ni >= 0 && nj >= 0 && nk >= 0 && ni < d[0] && nj < d[1] &&
                        nk < d[2])
                        mout->values[idx] =
                            mask->values[mask->grid.index(ni, nj, nk)] ? 1 : 0;
                }
            }
    return {std::move(out), std::move(mout)};
}

inline std::pair<Volume3, std::optional<Mask3>> apply_augment(
    const Volume3& vol, const std::optional<Mask3>& mask, const AugmentSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case AugmentKind::kSharpen:
            return {sharpen(vol, spec.amount), mask};
        case AugmentKind::kSigmoidContrast:
            return {sigmoid_contrast(vol, spec.gain, spec.cutoff), mask};
        case AugmentKind::kAffine:
            return affine_transform(vol, mask, spec);
    }
    throw std::logic_error("apply_augment: unknown kind");
}

}  // namespace scbct
