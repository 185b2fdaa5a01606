#include "perfrec/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace perfrec {

namespace {

constexpr double kFineDt = 0.02;      // s, quadrature grid for truth CBV/MTT
constexpr double kFineHorizon = 80.0; // s

bool region_inside_grid(const TissueRegion& r, const ImageGrid& grid) {
    // conservative: rotated bounding radius against the grid extent
    const double reach = std::max(r.semi_x, r.semi_y);
    const double half_x = 0.5 * grid.nx * grid.dx;
    const double half_y = 0.5 * grid.ny * grid.dy;
    return std::abs(r.center_x - grid.origin_x) + reach <= half_x &&
           std::abs(r.center_y - grid.origin_y) + reach <= half_y;
}

bool ellipse_inside_any(const TissueRegion& inner, const std::vector<const TissueRegion*>& outers) {
    constexpr int samples = 256;
    for (int k = 0; k < samples; ++k) {
        const double phi = 2.0 * std::numbers::pi * k / samples;
        const double ex = inner.semi_x * std::cos(phi);
        const double ey = inner.semi_y * std::sin(phi);
        const double c = std::cos(inner.rotation), s = std::sin(inner.rotation);
        const double x = inner.center_x + c * ex - s * ey;
        const double y = inner.center_y + s * ex + c * ey;
        bool inside = false;
        for (const TissueRegion* outer : outers)
            if (outer->contains(x, y)) { inside = true; break; }
        if (!inside) return false;
    }
    return true;
}

int priority(TissueLabel label) { return static_cast<int>(label); }

}  // namespace

std::string to_string(TissueLabel label) {
    switch (label) {
        case TissueLabel::background: return "background";
        case TissueLabel::skull: return "skull";
        case TissueLabel::healthy: return "healthy";
        case TissueLabel::csf: return "csf";
        case TissueLabel::penumbra: return "penumbra";
        case TissueLabel::core: return "core";
        case TissueLabel::artery: return "artery";
    }
    return "unknown";
}

bool TissueRegion::contains(double x, double y) const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    const double rx = c * (x - center_x) + s * (y - center_y);
    const double ry = -s * (x - center_x) + c * (y - center_y);
    const double ex = rx / semi_x;
    const double ey = ry / semi_y;
    return ex * ex + ey * ey <= 1.0;
}

double sample_aif(const AifModel& model, double t) {
    if (t < 0.0) throw std::invalid_argument("sample_aif: negative time");
    if (t <= model.arrival_s) return 0.0;
    const double tau = (t - model.arrival_s) / (model.shape * model.scale_s);
    return model.peak * std::pow(tau, model.shape) *
           std::exp(model.shape - (t - model.arrival_s) / model.scale_s);
}

std::vector<double> sample_aif(const AifModel& model, const std::vector<double>& times) {
    std::vector<double> out(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) out[i] = sample_aif(model, times[i]);
    return out;
}

std::vector<double> PhantomInstance::tissue_mask() const {
    std::vector<double> mask(labels.size(), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == TissueLabel::healthy || labels[i] == TissueLabel::penumbra ||
            labels[i] == TissueLabel::core)
            mask[i] = 1.0;
    return mask;
}

std::vector<double> PhantomInstance::label_mask(TissueLabel label) const {
    std::vector<double> mask(labels.size(), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) mask[i] = 1.0;
    return mask;
}

PhantomInstance build_phantom(const PhantomConfig& config, const ImageGrid& grid) {
    std::vector<const TissueRegion*> brain;
    for (const auto& r : config.regions) {
        if (!(r.semi_x > 0.0) || !(r.semi_y > 0.0))
            throw std::invalid_argument("build_phantom: degenerate region " + to_string(r.label));
        if (r.cbf_true < 0.0 || r.t0_true < 0.0)
            throw std::invalid_argument("build_phantom: negative perfusion value");
        if (!region_inside_grid(r, grid))
            throw std::invalid_argument("build_phantom: region outside grid: " + to_string(r.label));
        if (r.label == TissueLabel::healthy) brain.push_back(&r);
    }
    for (const auto& r : config.regions) {
        if (r.label != TissueLabel::penumbra && r.label != TissueLabel::core) continue;
        if (brain.empty() || !ellipse_inside_any(r, brain))
            throw std::invalid_argument("build_phantom: " + to_string(r.label) +
                                        " region not inside the brain ellipse");
    }

    PhantomInstance phantom;
    phantom.grid = grid;
    phantom.config = config;
    const std::size_t n = grid.npixels();
    phantom.labels.assign(n, TissueLabel::background);
    phantom.cbf.assign(n, 0.0);
    phantom.t0.assign(n, 0.0);
    phantom.mu0.assign(n, 0.0);

    for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const std::size_t idx = static_cast<std::size_t>(iy) * grid.nx + ix;
            const double x = grid.pixel_x(ix);
            const double y = grid.pixel_y(iy);
            for (const auto& r : config.regions) {
                if (priority(r.label) < priority(phantom.labels[idx])) continue;
                if (!r.contains(x, y)) continue;
                phantom.labels[idx] = r.label;
                phantom.mu0[idx] = r.mu0;
                const bool perfused = r.label == TissueLabel::healthy ||
                                      r.label == TissueLabel::penumbra ||
                                      r.label == TissueLabel::core;
                phantom.cbf[idx] = perfused ? r.cbf_true : 0.0;
                phantom.t0[idx] = perfused ? r.t0_true : 0.0;
            }
        }
    }

    // truth CBV/MTT by quadrature on a fine time grid
    ParamImagePair u(grid);
    u.cbf = phantom.cbf;
    u.t0 = phantom.t0;
    ConvolutionContext ctx;
    ctx.dt = kFineDt;
    ctx.rho = config.rho;
    ctx.decay_seconds = config.decay_seconds;
    const TimeGrid fine(static_cast<int>(kFineHorizon / kFineDt), kFineDt, 0.5 * kFineDt);
    const CbvMttResult derived = derive_cbv_mtt(u, ctx, fine);
    phantom.cbv = derived.cbv;
    phantom.mtt = derived.mtt;
    return phantom;
}

DynamicImage ground_truth_dynamic(const PhantomInstance& phantom, const AifModel& aif,
                                  const TimeGrid& tg) {
    ConvolutionContext ctx;
    ctx.aif_matrix = build_aif_matrix(sample_aif(aif, tg.times));
    ctx.dt = tg.dt;
    ctx.rho = phantom.config.rho;
    ctx.decay_seconds = phantom.config.decay_seconds;

    ParamImagePair u(phantom.grid);
    u.cbf = phantom.cbf;
    u.t0 = phantom.t0;
    DynamicImage x = synthesize_dynamic(u, ctx, tg);

    for (std::size_t i = 0; i < phantom.labels.size(); ++i) {
        if (phantom.labels[i] != TissueLabel::artery) continue;
        for (int j = 0; j < tg.frame_count; ++j)
            x.frames[j][i] = sample_aif(aif, tg.times[j]);
    }
    return x;
}

PhantomConfig desk_phantom_config() {
    PhantomConfig cfg;
    const auto deg = [](double d) { return d * std::numbers::pi / 180.0; };
    cfg.regions = {
        {TissueLabel::skull, 0.0, 0.0, 28.0, 30.0, 0.0, 0.0, 0.0, 0.040},
        {TissueLabel::healthy, 0.0, 0.0, 25.5, 27.5, 0.0, 50.0, 2.0, 0.020},
        {TissueLabel::csf, -3.5, 6.0, 3.0, 7.5, deg(15.0), 0.0, 0.0, 0.018},
        {TissueLabel::csf, 3.5, 6.0, 3.0, 7.5, deg(-15.0), 0.0, 0.0, 0.018},
        {TissueLabel::penumbra, -11.0, -5.0, 11.0, 13.0, 0.0, 20.0, 5.0, 0.020},
        {TissueLabel::core, -12.0, -6.0, 4.5, 5.5, 0.0, 8.0, 7.0, 0.020},
        {TissueLabel::artery, 0.0, 20.0, 2.5, 2.5, 0.0, 0.0, 0.0, 0.020},
    };
    return cfg;
}

PhantomConfig full_phantom_config() {
    PhantomConfig cfg = desk_phantom_config();
    for (auto& r : cfg.regions) {
        r.center_x *= 3.2;
        r.center_y *= 3.2;
        r.semi_x *= 3.2;
        r.semi_y *= 3.2;
    }
    return cfg;
}

}  // namespace perfrec
