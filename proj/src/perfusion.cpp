#include "perfrec/perfusion.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

namespace perfrec {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_bounds(const ParamImagePair& u) {
    require_finite(u.cbf, "CBF map");
    require_finite(u.t0, "T0 map");
    for (double f : u.cbf)
        if (f < 0.0) throw std::invalid_argument("CBF map has negative entries");
    for (double t : u.t0)
        if (t < 0.0) throw std::invalid_argument("T0 map has negative entries");
}

/// Exponential decay rate of pixel i's residue tail, 1/s.
inline double decay_rate(const ConvolutionContext& ctx, double cbf) {
    if (ctx.decay_mode == ResidueDecayMode::partition)
        return ctx.rho * ctx.flow_unit * cbf / ctx.partition_coeff;
    return 1.0 / ctx.decay_seconds;
}

}  // namespace

Mat build_aif_matrix(const std::vector<double>& aif_samples) {
    const std::size_t t = aif_samples.size();
    if (t < 1) throw std::invalid_argument("build_aif_matrix: need at least one sample");
    require_finite(aif_samples, "AIF samples");
    Mat b(t, t, 0.0);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j <= i; ++j) b(i, j) = aif_samples[i - j];
    return b;
}

Mat residue_matrix(const ParamImagePair& u, const ConvolutionContext& ctx, const TimeGrid& tg) {
    check_bounds(u);
    const std::size_t n = u.cbf.size();
    const std::size_t t = tg.times.size();
    Mat c(n, t);
    const double scale = ctx.rho * ctx.flow_unit;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double plateau = scale * u.cbf[i];
        const double rate = decay_rate(ctx, u.cbf[i]);
        const double lag = u.t0[i];
        double* row = &c.data[static_cast<std::size_t>(i) * t];
        for (std::size_t j = 0; j < t; ++j) {
            const double tj = tg.times[j];
            row[j] = (tj < lag) ? plateau : plateau * std::exp(-(tj - lag) * rate);
        }
    }
    return c;
}

DynamicImage synthesize_dynamic(const ParamImagePair& u, const ConvolutionContext& ctx,
                                const TimeGrid& tg) {
    const std::size_t n = u.cbf.size();
    const std::size_t t = tg.times.size();
    if (ctx.aif_matrix.rows != t || ctx.aif_matrix.cols != t)
        throw std::invalid_argument("synthesize_dynamic: AIF matrix does not match the time grid");
    Mat c = residue_matrix(u, ctx, tg);

    DynamicImage x(u.grid, static_cast<int>(t));
    ConstMapMat cm(c.data.data(), n, t);
    ConstMapMat bm(ctx.aif_matrix.data.data(), t, t);
    RowMat xm = ctx.dt * (cm * bm.transpose());
    for (std::size_t j = 0; j < t; ++j)
        for (std::size_t i = 0; i < n; ++i) x.frames[j][i] = xm(i, j);
    return x;
}

CbvMttResult derive_cbv_mtt(const ParamImagePair& u, const ConvolutionContext& ctx,
                            const TimeGrid& tg, double eps_flow) {
    Mat c = residue_matrix(u, ctx, tg);
    const std::size_t n = u.cbf.size();
    const std::size_t t = tg.times.size();
    CbvMttResult out;
    out.cbv.assign(n, 0.0);
    out.mtt.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double area = 0.0;
        for (std::size_t j = 0; j < t; ++j) area += c(i, j);
        // area of the flow-scaled residue in mL/g, reported per 100 g
        out.cbv[i] = 100.0 * area * ctx.dt / ctx.rho;
        if (u.cbf[i] > eps_flow) {
            out.mtt[i] = 60.0 * out.cbv[i] / u.cbf[i];  // minutes -> seconds
        } else {
            out.cbv[i] = 0.0;
            out.mtt[i] = 0.0;
            ++out.zeroed_pixels;
        }
    }
    return out;
}

ParamGradient grad_dynamic(const ParamImagePair& u, const ConvolutionContext& ctx,
                           const TimeGrid& tg, const Mat& upstream) {
    check_bounds(u);
    require_finite(upstream.data, "upstream sensitivity");
    const std::size_t n = u.cbf.size();
    const std::size_t t = tg.times.size();
    if (upstream.rows != n || upstream.cols != t)
        throw std::invalid_argument("grad_dynamic: upstream shape mismatch");

    // dL/dC = dt * upstream * B
    ConstMapMat gm(upstream.data.data(), n, t);
    ConstMapMat bm(ctx.aif_matrix.data.data(), t, t);
    RowMat gc = ctx.dt * (gm * bm);

    ParamGradient grad;
    grad.d_cbf.assign(n, 0.0);
    grad.d_t0.assign(n, 0.0);
    const double scale = ctx.rho * ctx.flow_unit;
    const bool partition = ctx.decay_mode == ResidueDecayMode::partition;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double cbf = u.cbf[i];
        const double lag = u.t0[i];
        const double rate = decay_rate(ctx, cbf);
        double d_cbf = 0.0;
        double d_t0 = 0.0;
        for (std::size_t j = 0; j < t; ++j) {
            const double g = gc(i, j);
            const double tj = tg.times[j];
            if (tj < lag) {
                d_cbf += g * scale;  // plateau: C = scale*CBF, no T0 dependence
            } else {
                const double e = std::exp(-(tj - lag) * rate);
                double dc_dcbf = scale * e;
                if (partition)  // rate itself depends on CBF
                    dc_dcbf -= scale * cbf * e * (tj - lag) * scale / ctx.partition_coeff;
                d_cbf += g * dc_dcbf;
                d_t0 += g * scale * cbf * rate * e;
            }
        }
        grad.d_cbf[i] = d_cbf;
        grad.d_t0[i] = d_t0;
    }
    return grad;
}

}  // namespace perfrec
