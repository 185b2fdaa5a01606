#pragma once

#include <vector>

#include "perfrec/core.hpp"

namespace perfrec {

/// The pair of unknown parametric maps U = [CBF, T0].
/// CBF in mL/100g/min, T0 (enhancement onset lag) in seconds.
struct ParamImagePair {
    ImageGrid grid;
    std::vector<double> cbf;
    std::vector<double> t0;

    ParamImagePair() = default;
    ParamImagePair(const ImageGrid& g, double cbf_fill = 0.0, double t0_fill = 0.0)
        : grid(g), cbf(g.npixels(), cbf_fill), t0(g.npixels(), t0_fill) {}
};

/// Decay law of the exponential residue tail after the onset lag.
/// `constant_h`: fixed time constant `decay_seconds` for every pixel.
/// `partition`: per-pixel rate rho*flow_unit*CBF_i / partition_coeff, which
/// makes MTT vary with flow instead of pinning it near T0 + h.
enum class ResidueDecayMode { constant_h, partition };

/// Physical constants and the arterial-input matrix shared by the
/// convolution model.
///
/// Units: `flow_unit` converts CBF from mL/100g/min to mL/(g*s), so rows of
/// C carry 1/s and dt*C*B^T carries the AIF's enhancement unit (1/mm).
struct ConvolutionContext {
    Mat aif_matrix;               // B, T x T lower-triangular Toeplitz
    double dt = 1.0;              // frame spacing, s
    double rho = 1.04;            // nominal tissue density, g/mL
    double decay_seconds = 4.0;   // residue tail time constant, s
    double flow_unit = 1.0 / 6000.0;
    ResidueDecayMode decay_mode = ResidueDecayMode::constant_h;
    double partition_coeff = 0.9;  // mL/g, partition mode only
};

/// B_{i,j} = aif(t_{i-j+1}) for j <= i, 0 otherwise (1-based indices).
Mat build_aif_matrix(const std::vector<double>& aif_samples);

/// Flow-scaled residue matrix C (N x T):
///   C_{i,j} = rho * flow_unit * CBF_i                          for t_j <  T0_i
///   C_{i,j} = rho * flow_unit * CBF_i * exp(-(t_j - T0_i)/h)   for t_j >= T0_i
Mat residue_matrix(const ParamImagePair& u, const ConvolutionContext& ctx, const TimeGrid& tg);

/// X = dt * C * B^T, one enhancement time curve per pixel.
DynamicImage synthesize_dynamic(const ParamImagePair& u, const ConvolutionContext& ctx,
                                const TimeGrid& tg);

struct CbvMttResult {
    std::vector<double> cbv;       // mL/100g
    std::vector<double> mtt;       // s
    int zeroed_pixels = 0;         // pixels with CBF <= eps_flow, reported as 0
};

/// CBV_i = 100/rho * sum_j C_{i,j} dt (mL/100g); MTT_i = 60 * CBV_i / CBF_i (s).
CbvMttResult derive_cbv_mtt(const ParamImagePair& u, const ConvolutionContext& ctx,
                            const TimeGrid& tg, double eps_flow = 1e-6);

struct ParamGradient {
    std::vector<double> d_cbf;
    std::vector<double> d_t0;
};

/// Chain rule through X = dt * C(U) * B^T: given dL/dX, return dL/dCBF and
/// dL/dT0 per pixel. The plateau branch contributes zero T0 gradient; at an
/// exact breakpoint t_j == T0_i the exponential-branch derivative is used.
ParamGradient grad_dynamic(const ParamImagePair& u, const ConvolutionContext& ctx,
                           const TimeGrid& tg, const Mat& upstream);

}  // namespace perfrec
