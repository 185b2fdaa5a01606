#pragma once

#include <cstdint>
#include <vector>

#include "perfrec/core.hpp"
#include "perfrec/geometry.hpp"

namespace perfrec {

/// Acquisition protocol. Key names match the config file schema.
struct ProtocolConfig {
    int scans = 8;              // contrast rotations, S
    int subsets_per_scan = 4;   // K
    int views_per_rotation = 200;
    double seconds_per_rotation = 8.0;
    int mask_scans = 2;         // pre-contrast rotations
    double entrance_photons = 1e6;  // I0 preset used by the noise model
    std::uint64_t seed = 0;
};

/// Frame-by-frame view assignment for the mask + bidirectional contrast
/// scans. Contrast scan s starts at t = s * seconds_per_rotation (s from 0),
/// mask scans run back-to-back before t = 0. Odd-numbered scans rotate in
/// reverse: same angles, opposite acquisition order.
struct ScanSchedule {
    int scans = 0;             // S
    int subsets_per_scan = 0;  // K
    double seconds_per_rotation = 0.0;
    std::vector<ViewSet> frame_views;       // T = K*S entries, acquisition order
    std::vector<double> frame_times;        // frame-centre times, s
    std::vector<ViewSet> mask_views;        // one full rotation each
    std::vector<double> mask_start_times;   // s (negative: before contrast start)

    int frame_count() const { return static_cast<int>(frame_views.size()); }
    TimeGrid time_grid() const;
    void validate() const;
};

ScanSchedule make_schedule(const ProtocolConfig& protocol);

/// Per-frame line-integral blocks plus per-ray statistical weights
/// (the diagonal of W).
struct SinogramStack {
    FanBeamGeometry geom;
    std::vector<Sinogram> frames;
    std::vector<std::vector<double>> weights;  // same block shapes as frames

    std::size_t ray_count() const;
    void validate() const;
};

SinogramStack project_dynamic_stack_shape(const ScanSchedule& schedule,
                                          const FanBeamGeometry& geom);

/// Transmission-domain Poisson noise: counts ~ Poisson(I0 * exp(-l)) per ray,
/// noisy line integral = ln(I0 / max(counts, 1)). One counter-based stream
/// per global ray index (offset + position), so results do not depend on
/// evaluation order or frame blocking.
SinogramStack apply_poisson_noise(const SinogramStack& ideal, double i0, std::uint64_t seed,
                                  std::uint64_t ray_offset = 0);
Sinogram apply_poisson_noise(const Sinogram& ideal, double i0, std::uint64_t seed,
                             std::uint64_t ray_offset = 0);

/// w_i = I0 * exp(-l_i) (estimated detected counts), normalized by the
/// maximum over the stack.
std::vector<std::vector<double>> estimate_weights(const SinogramStack& noisy, double i0);

/// Removes the baseline-anatomy contribution from contrast line integrals.
/// When every contrast angle was also measured by the mask scans (the normal
/// protocol: all rotations share one angle grid), the averaged mask reading
/// for the matching angle is subtracted directly, which is exact for
/// noiseless data by linearity. Otherwise the baseline image is FBP
/// reconstructed from the averaged mask scans and reprojected onto each
/// frame's views.
SinogramStack subtract_mask(const SinogramStack& contrast, const std::vector<Sinogram>& mask_scans,
                            const ImageGrid& grid);

}  // namespace perfrec
