#pragma once

#include <vector>

#include "perfrec/acquisition.hpp"
#include "perfrec/core.hpp"

namespace perfrec {

/// Per-pixel time-attenuation curves on the coarse frame grid, with the AIF
/// sampled at the same frame times.
struct TacSet {
    ImageGrid grid;
    TimeGrid time_grid;
    Mat curves;                      // N x frames
    std::vector<double> aif_samples; // frames
};

/// One FBP frame per contrast rotation: the K subsets of each scan are
/// reassembled into a full-rotation sinogram of mask-subtracted enhancement
/// data and reconstructed; frame time is the rotation centre.
DynamicImage fbp_time_resolved(const SinogramStack& measured, const ScanSchedule& schedule,
                               const ImageGrid& grid);

/// Separable Gaussian smoothing: spatial 5x5 (sigma 1), then temporal 3-tap
/// (sigma 1); reflect boundaries, kernels normalized to sum 1.
DynamicImage denoise_spatiotemporal(const DynamicImage& x);

struct DeconvolutionResult {
    std::vector<double> cbf;  // mL/100g/min
    std::vector<double> cbv;  // mL/100g
    std::vector<double> mtt;  // s
};

/// Truncated-SVD Tikhonov deconvolution of each TAC against the AIF
/// convolution matrix dt*B: filter factors sigma_k / (sigma_k^2 +
/// (threshold * sigma_max)^2). CBF is the residue maximum, CBV its time
/// integral.
DeconvolutionResult svd_tikhonov_deconvolve(const TacSet& tacs, double dt, double threshold,
                                            double rho = 1.04, double flow_unit = 1.0 / 6000.0);

}  // namespace perfrec
