#pragma once

#include <vector>

#include "perfrec/acquisition.hpp"
#include "perfrec/core.hpp"
#include "perfrec/geometry.hpp"

namespace perfrec {

/// Ray-driven fan-beam projection (Joseph-style interpolating traversal).
/// Forward and adjoint enumerate identical (pixel, weight) pairs, so
/// back_project is the exact transpose of forward_project.
Sinogram forward_project(const std::vector<double>& image, const ImageGrid& grid,
                         const FanBeamGeometry& geom, const ViewSet& views);

std::vector<double> back_project(const Sinogram& sino, const ImageGrid& grid);

/// Equispaced-flat-detector fan-beam FBP over a (roughly uniform) full
/// rotation: cosine weighting, band-limited ramp filter applied in the
/// frequency domain, distance-weighted backprojection, redundancy factor 1/2
/// for the full scan.
struct FbpOptions {
    bool cosine_window = false;  // optional apodization on top of the ramp
};
std::vector<double> fbp_reconstruct(const Sinogram& sino, const ImageGrid& grid,
                                    const FbpOptions& options = {});

/// Block-diagonal dynamic forward model: frame t is projected over its own
/// view subset only. Weights in the returned stack are left at 1.
SinogramStack project_dynamic(const DynamicImage& x, const ScanSchedule& schedule,
                              const FanBeamGeometry& geom);

/// Precomputed sparse rows of the system matrix for one view set, plus the
/// exact transpose apply. Built by running the same traversal kernel once.
struct SparseProjection {
    int n_det = 0;
    std::size_t n_rays = 0;
    std::vector<std::size_t> row_start;  // n_rays + 1
    std::vector<int> col;                // pixel indices
    std::vector<double> weight;          // intersection weights, mm

    void apply(const std::vector<double>& image, double* rays_out) const;
    void apply_transpose(const double* rays_in, double* image_acc) const;
    std::size_t entry_count() const { return col.size(); }
};

SparseProjection build_sparse_projection(const ImageGrid& grid, const FanBeamGeometry& geom,
                                         const ViewSet& views);

/// Repeated-evaluation interface used by the iterative solver: applies the
/// per-frame blocks of the block-diagonal operator and its adjoint. Caches
/// sparse rows per frame when `cache_sparse` is set (desk-scale problems);
/// falls back to the on-the-fly kernel otherwise. Both paths produce
/// identical values because they run the same traversal.
class DynamicProjector {
  public:
    DynamicProjector(const ImageGrid& grid, const FanBeamGeometry& geom,
                     const ScanSchedule& schedule, bool cache_sparse);

    /// X (N x T, column per frame) -> per-frame ray blocks, concatenated.
    void forward(const Mat& x, std::vector<double>& rays_out) const;
    /// Adjoint: concatenated ray blocks -> N x T accumulation.
    void adjoint(const std::vector<double>& rays, Mat& x_acc) const;

    std::size_t total_rays() const { return total_rays_; }
    std::size_t frame_ray_offset(int frame) const;
    int frame_count() const { return static_cast<int>(schedule_.frame_views.size()); }

  private:
    ImageGrid grid_;
    FanBeamGeometry geom_;
    ScanSchedule schedule_;
    bool cached_;
    std::size_t total_rays_ = 0;
    std::vector<SparseProjection> frame_blocks_;
};

}  // namespace perfrec
