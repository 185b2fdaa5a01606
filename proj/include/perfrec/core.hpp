#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace perfrec {

/// Dense row-major matrix of doubles. Deliberately minimal; heavy linear
/// algebra goes through Eigen::Map views where it matters.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

/// Square pixel grid centred on the isocenter (plus an optional mm offset).
/// Pixel (ix, iy) has centre
///   x = origin_x + (ix - (nx-1)/2) * dx,  y = origin_y + (iy - (ny-1)/2) * dy,
/// and the flat index is iy*nx + ix (row-major).
struct ImageGrid {
    int nx = 0;
    int ny = 0;
    double dx = 1.0;  // mm
    double dy = 1.0;  // mm
    double origin_x = 0.0;  // mm offset of grid centre from isocenter
    double origin_y = 0.0;

    ImageGrid() = default;
    ImageGrid(int nx_, int ny_, double dx_, double dy_,
              double ox = 0.0, double oy = 0.0);

    std::size_t npixels() const { return static_cast<std::size_t>(nx) * ny; }
    double pixel_x(int ix) const { return origin_x + (ix - 0.5 * (nx - 1)) * dx; }
    double pixel_y(int iy) const { return origin_y + (iy - 0.5 * (ny - 1)) * dy; }
    /// Radius of the circle through the grid corners, measured from isocenter.
    double circumradius() const;

    bool operator==(const ImageGrid& o) const = default;
};

/// Uniformly spaced frame-centre times t_1..t_T.
struct TimeGrid {
    int frame_count = 0;        // T
    double dt = 0.0;            // frame spacing, s
    std::vector<double> times;  // frame centres, s; strictly increasing

    TimeGrid() = default;
    TimeGrid(int count, double dt_, double t_first);
    static TimeGrid from_times(const std::vector<double>& t);
};

/// Time series of images on a common grid. Frame values are contrast
/// enhancement in 1/mm above the baseline attenuation.
struct DynamicImage {
    ImageGrid grid;
    std::vector<std::vector<double>> frames;

    DynamicImage() = default;
    DynamicImage(const ImageGrid& g, int frame_count)
        : grid(g), frames(frame_count, std::vector<double>(g.npixels(), 0.0)) {}

    int frame_count() const { return static_cast<int>(frames.size()); }
    void validate() const;  // throws if shapes mismatch or values non-finite
};

/// Stack frames column-wise: X(:,j) = frame j in row-major pixel order.
Mat stack_frames(const std::vector<std::vector<double>>& frames);
std::vector<std::vector<double>> unstack_frames(const Mat& x);

/// Column-major flattening of a matrix, vec(X), and its inverse.
std::vector<double> vectorize(const Mat& x);
Mat devectorize(const std::vector<double>& v, std::size_t rows, std::size_t cols);

bool all_finite(const std::vector<double>& v);
void require_finite(const std::vector<double>& v, const std::string& what);

}  // namespace perfrec
