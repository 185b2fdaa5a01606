#include "perfrec/projector.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace perfrec {

namespace {

constexpr double kPi = std::numbers::pi;

struct RayEndpoints {
    double sx, sy;  // source
    double px, py;  // detector bin centre
};

RayEndpoints ray_endpoints(const FanBeamGeometry& geom, double angle, int bin) {
    const double ce = std::cos(angle), se = std::sin(angle);
    const double sx = geom.source_to_iso * ce;
    const double sy = geom.source_to_iso * se;
    // detector midline sits opposite the source; bin axis is tangential
    const double dcx = (geom.source_to_iso - geom.source_to_detector) * ce;
    const double dcy = (geom.source_to_iso - geom.source_to_detector) * se;
    const double offset = (bin - 0.5 * (geom.n_det - 1)) * geom.det_pitch;
    return {sx, sy, dcx - offset * se, dcy + offset * ce};
}

/// Joseph traversal: walk the dominant axis one pixel-centre line at a time
/// and linearly interpolate between the two neighbouring centres on the other
/// axis. Calls fn(pixel_index, weight_mm) for every contribution; the weight
/// sum per crossed line equals the step length along the ray.
template <typename Fn>
void traverse_ray(const ImageGrid& grid, const RayEndpoints& ray, Fn&& fn) {
    const double vx = ray.px - ray.sx;
    const double vy = ray.py - ray.sy;
    const double x0 = grid.pixel_x(0);
    const double y0 = grid.pixel_y(0);

    if (std::abs(vx) >= std::abs(vy)) {
        const double step = grid.dx * std::hypot(vx, vy) / std::abs(vx);
        const double dydx = vy / vx;
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double x = x0 + ix * grid.dx;
            const double y = ray.sy + (x - ray.sx) * dydx;
            const double gy = (y - y0) / grid.dy;
            const int iy = static_cast<int>(std::floor(gy));
            const double f = gy - iy;
            if (iy >= 0 && iy < grid.ny - 1) {
                fn(static_cast<std::size_t>(iy) * grid.nx + ix, (1.0 - f) * step);
                fn(static_cast<std::size_t>(iy + 1) * grid.nx + ix, f * step);
            } else if (iy == -1) {
                fn(static_cast<std::size_t>(ix), f * step);
            } else if (iy == grid.ny - 1) {
                fn(static_cast<std::size_t>(iy) * grid.nx + ix, (1.0 - f) * step);
            }
        }
    } else {
        const double step = grid.dy * std::hypot(vx, vy) / std::abs(vy);
        const double dxdy = vx / vy;
        for (int iy = 0; iy < grid.ny; ++iy) {
            const double y = y0 + iy * grid.dy;
            const double x = ray.sx + (y - ray.sy) * dxdy;
            const double gx = (x - x0) / grid.dx;
            const int ix = static_cast<int>(std::floor(gx));
            const double f = gx - ix;
            const std::size_t row = static_cast<std::size_t>(iy) * grid.nx;
            if (ix >= 0 && ix < grid.nx - 1) {
                fn(row + ix, (1.0 - f) * step);
                fn(row + ix + 1, f * step);
            } else if (ix == -1) {
                fn(row, f * step);
            } else if (ix == grid.nx - 1) {
                fn(row + ix, (1.0 - f) * step);
            }
        }
    }
}

/// Band-limited ramp kernel sampled at bin spacing tau (values 1/tau^2 at 0,
/// -1/(pi n tau)^2 at odd lags, 0 at even lags).
std::vector<double> ramp_kernel(int n_det, double tau) {
    std::vector<double> h(2 * n_det - 1, 0.0);
    for (int m = -(n_det - 1); m <= n_det - 1; ++m) {
        double value = 0.0;
        if (m == 0)
            value = 1.0 / (4.0 * tau * tau);
        else if (m % 2 != 0)
            value = -1.0 / (kPi * kPi * m * m * tau * tau);
        h[m + n_det - 1] = value;
    }
    return h;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

void FanBeamGeometry::validate() const {
    if (!(source_to_detector > source_to_iso) || !(source_to_iso > 0.0))
        throw std::invalid_argument("FanBeamGeometry: need source_to_detector > source_to_iso > 0");
    if (n_det < 16) throw std::invalid_argument("FanBeamGeometry: n_det must be >= 16");
    if (!(det_pitch > 0.0)) throw std::invalid_argument("FanBeamGeometry: det_pitch must be positive");
    if (views_per_rotation < 1) throw std::invalid_argument("FanBeamGeometry: views_per_rotation >= 1");
}

double FanBeamGeometry::fov_radius() const {
    const double half_width = 0.5 * (n_det - 1) * det_pitch;
    return source_to_iso * std::sin(std::atan(half_width / source_to_detector));
}

void FanBeamGeometry::require_covers(const ImageGrid& grid) const {
    validate();
    if (grid.circumradius() > fov_radius())
        throw std::invalid_argument("fan coverage does not reach the image-grid circumscribed circle");
    if (grid.circumradius() >= source_to_iso)
        throw std::invalid_argument("image grid reaches the source orbit");
}

void ViewSet::validate() const {
    if (angles.empty()) throw std::invalid_argument("ViewSet: empty angle list");
    for (double a : angles)
        if (!(a >= 0.0) || !(a < 2.0 * kPi)) throw std::invalid_argument("ViewSet: angle outside [0, 2*pi)");
}

void Sinogram::validate() const {
    if (data.size() != angles.size() * static_cast<std::size_t>(geom.n_det))
        throw std::invalid_argument("Sinogram: data size mismatch");
    require_finite(data, "Sinogram data");
}

Sinogram forward_project(const std::vector<double>& image, const ImageGrid& grid,
                         const FanBeamGeometry& geom, const ViewSet& views) {
    if (image.size() != grid.npixels())
        throw std::invalid_argument("forward_project: image size does not match grid");
    require_finite(image, "forward_project image");
    views.validate();
    geom.require_covers(grid);

    Sinogram sino(geom, views.angles);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(views.angles.size()); ++v) {
        for (int k = 0; k < geom.n_det; ++k) {
            const RayEndpoints ray = ray_endpoints(geom, views.angles[v], k);
            double sum = 0.0;
            traverse_ray(grid, ray, [&](std::size_t idx, double w) { sum += w * image[idx]; });
            sino.at(static_cast<std::size_t>(v), k) = sum;
        }
    }
    return sino;
}

std::vector<double> back_project(const Sinogram& sino, const ImageGrid& grid) {
    sino.validate();
    sino.geom.require_covers(grid);
    const std::size_t n = grid.npixels();

#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
#else
    const int max_threads = 1;
#endif
    std::vector<std::vector<double>> partial(max_threads, std::vector<double>(n, 0.0));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(sino.n_views()); ++v) {
#ifdef _OPENMP
        auto& image = partial[omp_get_thread_num()];
#else
        auto& image = partial[0];
#endif
        for (int k = 0; k < sino.geom.n_det; ++k) {
            const double value = sino.at(static_cast<std::size_t>(v), k);
            if (value == 0.0) continue;
            const RayEndpoints ray = ray_endpoints(sino.geom, sino.angles[v], k);
            traverse_ray(grid, ray, [&](std::size_t idx, double w) { image[idx] += w * value; });
        }
    }
    // fixed-order reduction keeps results reproducible for a given thread count
    std::vector<double> image(n, 0.0);
    for (const auto& buf : partial)
        for (std::size_t i = 0; i < n; ++i) image[i] += buf[i];
    return image;
}

std::vector<double> fbp_reconstruct(const Sinogram& sino, const ImageGrid& grid,
                                    const FbpOptions& options) {
    sino.validate();
    sino.geom.require_covers(grid);
    const std::size_t n_views = sino.n_views();
    if (n_views < 2) throw std::invalid_argument("fbp_reconstruct: need at least 2 views");
    const FanBeamGeometry& geom = sino.geom;
    const int n_det = geom.n_det;
    const double r_si = geom.source_to_iso;
    // rescale the detector to a virtual one through the isocenter
    const double tau = geom.det_pitch * r_si / geom.source_to_detector;
    const double centre = 0.5 * (n_det - 1);

    // frequency response of the band-limited ramp, via its spatial kernel
    const std::size_t len = next_pow2(2 * static_cast<std::size_t>(n_det));
    const std::size_t n_freq = len / 2 + 1;
    std::vector<double> kernel_pad(len, 0.0);
    {
        const auto h = ramp_kernel(n_det, tau);
        // kernel centred at index 0 with wrap-around so convolution is linear
        kernel_pad[0] = h[n_det - 1];
        for (int m = 1; m <= n_det - 1; ++m) {
            kernel_pad[m] = h[n_det - 1 + m];
            kernel_pad[len - m] = h[n_det - 1 - m];
        }
    }
    std::vector<std::complex<double>> kernel_hat(n_freq);
    std::vector<std::complex<double>> row_hat(n_freq);
    std::vector<double> row_pad(len, 0.0);
    fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(len), row_pad.data(),
                                         reinterpret_cast<fftw_complex*>(row_hat.data()),
                                         FFTW_ESTIMATE);
    fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(len),
                                         reinterpret_cast<fftw_complex*>(row_hat.data()),
                                         row_pad.data(), FFTW_ESTIMATE);
    std::copy(kernel_pad.begin(), kernel_pad.end(), row_pad.begin());
    fftw_execute(fwd);
    std::copy(row_hat.begin(), row_hat.end(), kernel_hat.begin());
    if (options.cosine_window) {
        for (std::size_t k = 0; k < n_freq; ++k)
            kernel_hat[k] *= std::cos(0.5 * kPi * static_cast<double>(k) / (n_freq - 1));
    }

    Mat filtered(n_views, n_det);
    for (std::size_t v = 0; v < n_views; ++v) {
        std::fill(row_pad.begin(), row_pad.end(), 0.0);
        for (int k = 0; k < n_det; ++k) {
            const double s = (k - centre) * tau;
            const double cosw = r_si / std::hypot(r_si, s);
            row_pad[k] = sino.at(v, k) * cosw;
        }
        fftw_execute(fwd);
        for (std::size_t k = 0; k < n_freq; ++k) row_hat[k] *= kernel_hat[k] / static_cast<double>(len);
        fftw_execute(inv);
        for (int k = 0; k < n_det; ++k) filtered(v, k) = row_pad[k] * tau;
    }
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);

    // distance-weighted backprojection; 1/2 accounts for the two-fold
    // redundancy of the full scan
    std::vector<double> image(grid.npixels(), 0.0);
    const double dbeta = 2.0 * kPi / static_cast<double>(n_views);
    std::vector<double> cos_b(n_views), sin_b(n_views);
    for (std::size_t v = 0; v < n_views; ++v) {
        cos_b[v] = std::cos(sino.angles[v]);
        sin_b[v] = std::sin(sino.angles[v]);
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double x = grid.pixel_x(ix);
            const double y = grid.pixel_y(static_cast<int>(iy));
            double acc = 0.0;
            for (std::size_t v = 0; v < n_views; ++v) {
                const double relx = x - r_si * cos_b[v];
                const double rely = y - r_si * sin_b[v];
                const double t = -(relx * cos_b[v] + rely * sin_b[v]);  // along the central ray
                const double u = -relx * sin_b[v] + rely * cos_b[v];
                const double s = r_si * u / t;
                const double kf = s / tau + centre;
                const int k0 = static_cast<int>(std::floor(kf));
                if (k0 < 0 || k0 >= n_det - 1) continue;
                const double f = kf - k0;
                const double q = (1.0 - f) * filtered(v, k0) + f * filtered(v, k0 + 1);
                acc += q * (r_si * r_si) / (t * t);
            }
            image[static_cast<std::size_t>(iy) * grid.nx + ix] = 0.5 * dbeta * acc;
        }
    }
    return image;
}

SinogramStack project_dynamic(const DynamicImage& x, const ScanSchedule& schedule,
                              const FanBeamGeometry& geom) {
    if (x.frame_count() != schedule.frame_count())
        throw std::invalid_argument("project_dynamic: frame count does not match schedule");
    x.validate();
    SinogramStack stack;
    stack.geom = geom;
    stack.frames.reserve(schedule.frame_views.size());
    for (int t = 0; t < schedule.frame_count(); ++t)
        stack.frames.push_back(forward_project(x.frames[t], x.grid, geom, schedule.frame_views[t]));
    stack.weights.resize(stack.frames.size());
    for (std::size_t t = 0; t < stack.frames.size(); ++t)
        stack.weights[t].assign(stack.frames[t].data.size(), 1.0);
    return stack;
}

void SparseProjection::apply(const std::vector<double>& image, double* rays_out) const {
    for (std::size_t r = 0; r < n_rays; ++r) {
        double sum = 0.0;
        for (std::size_t e = row_start[r]; e < row_start[r + 1]; ++e)
            sum += weight[e] * image[col[e]];
        rays_out[r] = sum;
    }
}

void SparseProjection::apply_transpose(const double* rays_in, double* image_acc) const {
    for (std::size_t r = 0; r < n_rays; ++r) {
        const double value = rays_in[r];
        if (value == 0.0) continue;
        for (std::size_t e = row_start[r]; e < row_start[r + 1]; ++e)
            image_acc[col[e]] += weight[e] * value;
    }
}

SparseProjection build_sparse_projection(const ImageGrid& grid, const FanBeamGeometry& geom,
                                         const ViewSet& views) {
    views.validate();
    geom.require_covers(grid);
    SparseProjection sp;
    sp.n_det = geom.n_det;
    sp.n_rays = views.count() * static_cast<std::size_t>(geom.n_det);
    sp.row_start.reserve(sp.n_rays + 1);
    sp.row_start.push_back(0);
    sp.col.reserve(sp.n_rays * 2 * std::max(grid.nx, grid.ny));
    sp.weight.reserve(sp.col.capacity());
    for (double angle : views.angles) {
        for (int k = 0; k < geom.n_det; ++k) {
            const RayEndpoints ray = ray_endpoints(geom, angle, k);
            traverse_ray(grid, ray, [&](std::size_t idx, double w) {
                sp.col.push_back(static_cast<int>(idx));
                sp.weight.push_back(w);
            });
            sp.row_start.push_back(sp.col.size());
        }
    }
    sp.col.shrink_to_fit();
    sp.weight.shrink_to_fit();
    return sp;
}

DynamicProjector::DynamicProjector(const ImageGrid& grid, const FanBeamGeometry& geom,
                                   const ScanSchedule& schedule, bool cache_sparse)
    : grid_(grid), geom_(geom), schedule_(schedule), cached_(cache_sparse) {
    geom.require_covers(grid);
    schedule.validate();
    for (const auto& views : schedule_.frame_views)
        total_rays_ += views.count() * static_cast<std::size_t>(geom.n_det);
    if (cached_) {
        frame_blocks_.reserve(schedule_.frame_views.size());
        for (const auto& views : schedule_.frame_views)
            frame_blocks_.push_back(build_sparse_projection(grid_, geom_, views));
    }
}

std::size_t DynamicProjector::frame_ray_offset(int frame) const {
    std::size_t offset = 0;
    for (int t = 0; t < frame; ++t)
        offset += schedule_.frame_views[t].count() * static_cast<std::size_t>(geom_.n_det);
    return offset;
}

void DynamicProjector::forward(const Mat& x, std::vector<double>& rays_out) const {
    const int frames = frame_count();
    if (x.cols != static_cast<std::size_t>(frames) || x.rows != grid_.npixels())
        throw std::invalid_argument("DynamicProjector::forward: shape mismatch");
    rays_out.assign(total_rays_, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < frames; ++t) {
        std::vector<double> frame(grid_.npixels());
        for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = x(i, t);
        double* out = rays_out.data() + frame_ray_offset(t);
        if (cached_) {
            frame_blocks_[t].apply(frame, out);
        } else {
            const Sinogram sino = forward_project(frame, grid_, geom_, schedule_.frame_views[t]);
            std::copy(sino.data.begin(), sino.data.end(), out);
        }
    }
}

void DynamicProjector::adjoint(const std::vector<double>& rays, Mat& x_acc) const {
    const int frames = frame_count();
    if (rays.size() != total_rays_)
        throw std::invalid_argument("DynamicProjector::adjoint: ray count mismatch");
    if (x_acc.rows != grid_.npixels() || x_acc.cols != static_cast<std::size_t>(frames))
        x_acc = Mat(grid_.npixels(), frames);
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < frames; ++t) {
        std::vector<double> image(grid_.npixels(), 0.0);
        const double* in = rays.data() + frame_ray_offset(t);
        if (cached_) {
            frame_blocks_[t].apply_transpose(in, image.data());
        } else {
            Sinogram sino(geom_, schedule_.frame_views[t].angles);
            std::copy(in, in + sino.data.size(), sino.data.begin());
            image = back_project(sino, grid_);
        }
        for (std::size_t i = 0; i < image.size(); ++i) x_acc(i, t) = image[i];
    }
}

}  // namespace perfrec
