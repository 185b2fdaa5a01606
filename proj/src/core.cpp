#include "perfrec/core.hpp"

#include <cmath>

namespace perfrec {

ImageGrid::ImageGrid(int nx_, int ny_, double dx_, double dy_, double ox, double oy)
    : nx(nx_), ny(ny_), dx(dx_), dy(dy_), origin_x(ox), origin_y(oy) {
    if (nx < 8 || ny < 8) throw std::invalid_argument("ImageGrid: nx, ny must be >= 8");
    if (dx <= 0.0 || dy <= 0.0) throw std::invalid_argument("ImageGrid: pixel size must be positive");
    if (!std::isfinite(dx) || !std::isfinite(dy) || !std::isfinite(origin_x) || !std::isfinite(origin_y))
        throw std::invalid_argument("ImageGrid: non-finite parameter");
}

double ImageGrid::circumradius() const {
    const double hx = 0.5 * nx * dx + std::abs(origin_x);
    const double hy = 0.5 * ny * dy + std::abs(origin_y);
    return std::hypot(hx, hy);
}

TimeGrid::TimeGrid(int count, double dt_, double t_first) : frame_count(count), dt(dt_) {
    if (count < 1) throw std::invalid_argument("TimeGrid: frame count must be >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("TimeGrid: dt must be positive");
    times.resize(count);
    for (int j = 0; j < count; ++j) times[j] = t_first + j * dt;
}

TimeGrid TimeGrid::from_times(const std::vector<double>& t) {
    if (t.empty()) throw std::invalid_argument("TimeGrid: empty time list");
    TimeGrid tg;
    tg.frame_count = static_cast<int>(t.size());
    tg.times = t;
    tg.dt = t.size() > 1 ? t[1] - t[0] : 1.0;
    for (std::size_t j = 0; j + 1 < t.size(); ++j) {
        const double step = t[j + 1] - t[j];
        if (!(step > 0.0)) throw std::invalid_argument("TimeGrid: times must be strictly increasing");
        if (std::abs(step - tg.dt) > 1e-9 * std::max(1.0, std::abs(tg.dt)))
            throw std::invalid_argument("TimeGrid: frame spacing must be uniform");
    }
    require_finite(t, "TimeGrid times");
    return tg;
}

void DynamicImage::validate() const {
    for (const auto& f : frames) {
        if (f.size() != grid.npixels())
            throw std::invalid_argument("DynamicImage: frame size does not match grid");
        require_finite(f, "DynamicImage frame");
    }
}

Mat stack_frames(const std::vector<std::vector<double>>& frames) {
    if (frames.empty()) throw std::invalid_argument("stack_frames: no frames");
    const std::size_t n = frames[0].size();
    Mat x(n, frames.size());
    for (std::size_t j = 0; j < frames.size(); ++j) {
        if (frames[j].size() != n)
            throw std::invalid_argument("stack_frames: mismatched frame sizes");
        for (std::size_t i = 0; i < n; ++i) x(i, j) = frames[j][i];
    }
    return x;
}

std::vector<std::vector<double>> unstack_frames(const Mat& x) {
    std::vector<std::vector<double>> frames(x.cols, std::vector<double>(x.rows));
    for (std::size_t j = 0; j < x.cols; ++j)
        for (std::size_t i = 0; i < x.rows; ++i) frames[j][i] = x(i, j);
    return frames;
}

std::vector<double> vectorize(const Mat& x) {
    require_finite(x.data, "vectorize input");
    std::vector<double> v(x.rows * x.cols);
    std::size_t k = 0;
    for (std::size_t j = 0; j < x.cols; ++j)
        for (std::size_t i = 0; i < x.rows; ++i) v[k++] = x(i, j);
    return v;
}

Mat devectorize(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    if (v.size() != rows * cols) throw std::invalid_argument("devectorize: size mismatch");
    Mat x(rows, cols);
    std::size_t k = 0;
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t i = 0; i < rows; ++i) x(i, j) = v[k++];
    return x;
}

bool all_finite(const std::vector<double>& v) {
    for (double value : v)
        if (!std::isfinite(value)) return false;
    return true;
}

void require_finite(const std::vector<double>& v, const std::string& what) {
    if (!all_finite(v)) throw std::invalid_argument(what + ": non-finite value");
}

}  // namespace perfrec
