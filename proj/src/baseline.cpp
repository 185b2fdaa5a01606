#include "perfrec/baseline.hpp"

#include "perfrec/perfusion.hpp"
#include "perfrec/projector.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace perfrec {

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(size);
    const int c = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

inline int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

}  // namespace

DynamicImage fbp_time_resolved(const SinogramStack& measured, const ScanSchedule& schedule,
                               const ImageGrid& grid) {
    measured.validate();
    schedule.validate();
    if (static_cast<int>(measured.frames.size()) != schedule.frame_count())
        throw std::invalid_argument("fbp_time_resolved: stack does not match schedule");

    const int k_sub = schedule.subsets_per_scan;
    DynamicImage out(grid, schedule.scans);
    for (int s = 0; s < schedule.scans; ++s) {
        // reassemble this rotation's subsets into one full-scan sinogram
        std::vector<double> angles;
        std::vector<double> data;
        for (int k = 0; k < k_sub; ++k) {
            const auto& frame = measured.frames[static_cast<std::size_t>(s) * k_sub + k];
            angles.insert(angles.end(), frame.angles.begin(), frame.angles.end());
            data.insert(data.end(), frame.data.begin(), frame.data.end());
        }
        Sinogram full(measured.geom, angles);
        full.data = std::move(data);
        if (full.n_views() != static_cast<std::size_t>(measured.geom.views_per_rotation))
            throw std::invalid_argument("fbp_time_resolved: scan does not span a full rotation");
        out.frames[s] = fbp_reconstruct(full, grid);
    }
    return out;
}

DynamicImage denoise_spatiotemporal(const DynamicImage& x) {
    x.validate();
    const int t_count = x.frame_count();
    if (t_count < 3) throw std::invalid_argument("denoise_spatiotemporal: need at least 3 frames");
    const ImageGrid& grid = x.grid;
    const auto ks = gaussian_kernel(5, 1.0);
    const auto kt = gaussian_kernel(3, 1.0);

    DynamicImage out = x;
    std::vector<double> tmp(grid.npixels());
    for (int t = 0; t < t_count; ++t) {
        // separable spatial pass: rows then columns
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix) {
                double acc = 0.0;
                for (int j = 0; j < 5; ++j)
                    acc += ks[j] * out.frames[t][static_cast<std::size_t>(iy) * grid.nx +
                                                 reflect(ix + j - 2, grid.nx)];
                tmp[static_cast<std::size_t>(iy) * grid.nx + ix] = acc;
            }
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix) {
                double acc = 0.0;
                for (int j = 0; j < 5; ++j)
                    acc += ks[j] * tmp[static_cast<std::size_t>(reflect(iy + j - 2, grid.ny)) * grid.nx + ix];
                out.frames[t][static_cast<std::size_t>(iy) * grid.nx + ix] = acc;
            }
    }
    // temporal pass
    DynamicImage filtered = out;
    for (int t = 0; t < t_count; ++t)
        for (std::size_t i = 0; i < grid.npixels(); ++i) {
            double acc = 0.0;
            for (int j = 0; j < 3; ++j) acc += kt[j] * out.frames[reflect(t + j - 1, t_count)][i];
            filtered.frames[t][i] = acc;
        }
    return filtered;
}

DeconvolutionResult svd_tikhonov_deconvolve(const TacSet& tacs, double dt, double threshold,
                                            double rho, double flow_unit) {
    const std::size_t n = tacs.grid.npixels();
    const int t_count = tacs.time_grid.frame_count;
    if (tacs.curves.rows != n || tacs.curves.cols != static_cast<std::size_t>(t_count))
        throw std::invalid_argument("svd_tikhonov_deconvolve: curve matrix shape mismatch");
    bool aif_nonzero = false;
    for (double a : tacs.aif_samples)
        if (a != 0.0) aif_nonzero = true;
    if (!aif_nonzero) throw std::invalid_argument("svd_tikhonov_deconvolve: AIF is identically zero");

    const Mat b = build_aif_matrix(tacs.aif_samples);
    Eigen::MatrixXd m(t_count, t_count);
    for (int i = 0; i < t_count; ++i)
        for (int j = 0; j < t_count; ++j) m(i, j) = dt * b(i, j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sigma = svd.singularValues();
    const double mu = threshold * sigma(0);

    // regularized pseudo-inverse: V diag(s/(s^2+mu^2)) U^T
    Eigen::VectorXd filt(t_count);
    for (int i = 0; i < t_count; ++i) {
        const double s = sigma(i);
        filt(i) = (s > 0.0) ? s / (s * s + mu * mu) : 0.0;
    }
    const Eigen::MatrixXd pinv = svd.matrixV() * filt.asDiagonal() * svd.matrixU().transpose();

    DeconvolutionResult out;
    out.cbf.assign(n, 0.0);
    out.cbv.assign(n, 0.0);
    out.mtt.assign(n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        Eigen::VectorXd local_tac(t_count);
        bool all_zero = true;
        for (int j = 0; j < t_count; ++j) {
            local_tac(j) = tacs.curves(static_cast<std::size_t>(i), j);
            if (local_tac(j) != 0.0) all_zero = false;
        }
        if (all_zero) continue;
        const Eigen::VectorXd r = pinv * local_tac;
        const double peak = r.maxCoeff();
        double area = 0.0;
        for (int j = 0; j < t_count; ++j) area += r(j) * dt;
        const double cbf = std::max(peak, 0.0) / (rho * flow_unit);
        const double cbv = 100.0 * std::max(area, 0.0) / rho;
        out.cbf[i] = cbf;
        out.cbv[i] = cbv;
        out.mtt[i] = (cbf > 1e-9) ? 60.0 * cbv / cbf : 0.0;
    }
    return out;
}

}  // namespace perfrec
