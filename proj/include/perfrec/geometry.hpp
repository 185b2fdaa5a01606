#pragma once

#include <vector>

#include "perfrec/core.hpp"

namespace perfrec {

/// Fan-beam geometry with an equispaced flat detector. The source rotates on
/// a circle of radius `source_to_iso`; the detector midline sits opposite the
/// source at distance `source_to_detector` along the central ray.
struct FanBeamGeometry {
    double source_to_iso = 750.0;        // mm
    double source_to_detector = 1200.0;  // mm
    int n_det = 380;
    double det_pitch = 1.0;              // mm
    int views_per_rotation = 200;

    void validate() const;
    /// Radius of the fully sampled field of view around the isocenter.
    double fov_radius() const;
    /// Throws if the grid's circumscribed circle is not inside the fan coverage.
    void require_covers(const ImageGrid& grid) const;
};

/// Ordered list of view angles in acquisition order.
struct ViewSet {
    std::vector<double> angles;  // radians, each in [0, 2*pi)
    bool reverse = false;        // true when the scan rotates backwards

    std::size_t count() const { return angles.size(); }
    void validate() const;
};

/// Line integrals for one set of views: row v holds the detector readings of
/// angles[v].
struct Sinogram {
    FanBeamGeometry geom;
    std::vector<double> angles;
    std::vector<double> data;  // n_views x n_det, row-major

    Sinogram() = default;
    Sinogram(const FanBeamGeometry& g, const std::vector<double>& a)
        : geom(g), angles(a), data(a.size() * g.n_det, 0.0) {}

    std::size_t n_views() const { return angles.size(); }
    double& at(std::size_t view, int bin) { return data[view * geom.n_det + bin]; }
    double at(std::size_t view, int bin) const { return data[view * geom.n_det + bin]; }
    void validate() const;
};

}  // namespace perfrec
