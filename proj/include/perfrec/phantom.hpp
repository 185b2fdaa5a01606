#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "perfrec/core.hpp"
#include "perfrec/perfusion.hpp"

namespace perfrec {

enum class TissueLabel : std::uint8_t {
    background = 0,
    skull = 1,
    healthy = 2,
    csf = 3,
    penumbra = 4,
    core = 5,
    artery = 6,
};

std::string to_string(TissueLabel label);

/// One elliptical region. Later regions in the phantom config override
/// earlier ones, and the rasterizer also enforces the fixed label priority
/// background < skull < healthy < csf < penumbra < core < artery.
struct TissueRegion {
    TissueLabel label = TissueLabel::background;
    double center_x = 0.0;   // mm
    double center_y = 0.0;   // mm
    double semi_x = 0.0;     // mm
    double semi_y = 0.0;     // mm
    double rotation = 0.0;   // radians
    double cbf_true = 0.0;   // mL/100g/min
    double t0_true = 0.0;    // s
    double mu0 = 0.0;        // baseline attenuation, 1/mm

    bool contains(double x, double y) const;
};

/// Gamma-variate arterial input function, normalized so that the maximum
/// equals `peak`:
///   h(t) = peak * ((t-t0)/(shape*scale))^shape * exp(shape - (t-t0)/scale)
/// for t > arrival_s, zero otherwise.
struct AifModel {
    double arrival_s = 4.0;
    double shape = 3.0;
    double scale_s = 1.5;
    double peak = 0.015;  // 1/mm
};

double sample_aif(const AifModel& model, double t);
std::vector<double> sample_aif(const AifModel& model, const std::vector<double>& times);

struct PhantomConfig {
    std::vector<TissueRegion> regions;
    AifModel aif;
    double rho = 1.04;           // g/mL
    double decay_seconds = 4.0;  // residue tail constant handed to the perfusion model
};

struct PhantomInstance {
    ImageGrid grid;
    std::vector<TissueLabel> labels;
    std::vector<double> cbf;   // mL/100g/min
    std::vector<double> t0;    // s
    std::vector<double> cbv;   // mL/100g
    std::vector<double> mtt;   // s
    std::vector<double> mu0;   // 1/mm
    PhantomConfig config;

    std::vector<double> tissue_mask() const;  // 1 on healthy/penumbra/core, else 0
    std::vector<double> label_mask(TissueLabel label) const;
};

/// Deterministic rasterization of the labelled ellipse set plus ground-truth
/// parametric maps. CBV/MTT are derived from the CBF/T0 maps through the
/// perfusion module on a fine internal time grid.
PhantomInstance build_phantom(const PhantomConfig& config, const ImageGrid& grid);

/// Ground-truth enhancement series: perfused tissue follows the convolution
/// model with the true maps, artery pixels carry the AIF itself, everything
/// else stays at zero.
DynamicImage ground_truth_dynamic(const PhantomInstance& phantom, const AifModel& aif,
                                  const TimeGrid& tg);

/// Built-in phantom at desk scale (fits a 64 mm field) or full scale.
PhantomConfig desk_phantom_config();
PhantomConfig full_phantom_config();

}  // namespace perfrec
