#include "perfrec/generator.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace perfrec {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (salt + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2));
    x ^= x >> 30; x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27; x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

/// Reflection without edge repeat (index -1 maps to 1, index n to n-2).
inline int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

inline double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }

struct LinearTap {
    int i0, i1;
    double w0, w1;
};

/// Bilinear 2x upsampling taps, align-corners-false convention.
std::vector<LinearTap> upsample_taps(int out_n, int in_n) {
    std::vector<LinearTap> taps(out_n);
    for (int o = 0; o < out_n; ++o) {
        const double src = (o + 0.5) / 2.0 - 0.5;
        int i0 = static_cast<int>(std::floor(src));
        double f = src - i0;
        if (i0 < 0) { i0 = 0; f = 0.0; }
        int i1 = i0 + 1;
        if (i1 > in_n - 1) { i1 = in_n - 1; f = 0.0; }
        taps[o] = {i0, i1, 1.0 - f, f};
    }
    return taps;
}

struct ConvCache {
    RowMat cols;      // (in_ch*k*k) x (out_h*out_w)
    Tensor pre_act;   // conv output before activation
    int in_h = 0, in_w = 0;
};

void im2col(const Tensor& in, int k, int stride, RowMat& cols, int out_h, int out_w) {
    const int pad = k / 2;
    cols.resize(static_cast<Eigen::Index>(in.ch) * k * k,
                static_cast<Eigen::Index>(out_h) * out_w);
    for (int ci = 0; ci < in.ch; ++ci) {
        const double* plane = in.v.data() + static_cast<std::size_t>(ci) * in.h * in.w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Eigen::Index r = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
                double* dst = cols.data() + r * cols.cols();
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = reflect(oy * stride - pad + ky, in.h);
                    const double* src_row = plane + static_cast<std::size_t>(iy) * in.w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = reflect(ox * stride - pad + kx, in.w);
                        dst[static_cast<std::size_t>(oy) * out_w + ox] = src_row[ix];
                    }
                }
            }
        }
    }
}

void col2im(const RowMat& d_cols, int k, int stride, Tensor& d_in, int out_h, int out_w) {
    const int pad = k / 2;
    for (int ci = 0; ci < d_in.ch; ++ci) {
        double* plane = d_in.v.data() + static_cast<std::size_t>(ci) * d_in.h * d_in.w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Eigen::Index r = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
                const double* src = d_cols.data() + r * d_cols.cols();
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = reflect(oy * stride - pad + ky, d_in.h);
                    double* dst_row = plane + static_cast<std::size_t>(iy) * d_in.w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = reflect(ox * stride - pad + kx, d_in.w);
                        dst_row[ix] += src[static_cast<std::size_t>(oy) * out_w + ox];
                    }
                }
            }
        }
    }
}

Tensor conv_forward(const LayerSlot& slot, const std::vector<double>& theta, const Tensor& in,
                    double leaky_slope, bool activate, ConvCache& cache) {
    const int out_h = (slot.stride == 2) ? in.h / 2 : in.h;
    const int out_w = (slot.stride == 2) ? in.w / 2 : in.w;
    cache.in_h = in.h;
    cache.in_w = in.w;
    im2col(in, slot.kernel, slot.stride, cache.cols, out_h, out_w);

    Tensor out(slot.out_ch, out_h, out_w);
    ConstMapMat w(theta.data() + slot.weight_offset, slot.out_ch,
                  static_cast<Eigen::Index>(slot.in_ch) * slot.kernel * slot.kernel);
    MapMat out_m(out.v.data(), slot.out_ch, static_cast<Eigen::Index>(out_h) * out_w);
    out_m.noalias() = w * cache.cols;
    for (int co = 0; co < slot.out_ch; ++co)
        out_m.row(co).array() += theta[slot.bias_offset + co];

    cache.pre_act = out;
    if (activate) {
        for (double& x : out.v)
            if (x < 0.0) x *= leaky_slope;
    }
    return out;
}

/// d_out arrives after the activation; returns the gradient w.r.t. the conv
/// input and accumulates into d_theta.
Tensor conv_backward(const LayerSlot& slot, const std::vector<double>& theta,
                     const ConvCache& cache, Tensor d_out, double leaky_slope, bool activate,
                     std::vector<double>& d_theta, bool need_d_in) {
    if (activate) {
        for (std::size_t i = 0; i < d_out.v.size(); ++i)
            if (cache.pre_act.v[i] < 0.0) d_out.v[i] *= leaky_slope;
    }
    const Eigen::Index hw = static_cast<Eigen::Index>(d_out.h) * d_out.w;
    ConstMapMat d_out_m(d_out.v.data(), slot.out_ch, hw);

    MapMat d_w(d_theta.data() + slot.weight_offset, slot.out_ch,
               static_cast<Eigen::Index>(slot.in_ch) * slot.kernel * slot.kernel);
    d_w.noalias() += d_out_m * cache.cols.transpose();
    for (int co = 0; co < slot.out_ch; ++co)
        d_theta[slot.bias_offset + co] += d_out_m.row(co).sum();

    Tensor d_in;
    if (need_d_in) {
        ConstMapMat w(theta.data() + slot.weight_offset, slot.out_ch,
                      static_cast<Eigen::Index>(slot.in_ch) * slot.kernel * slot.kernel);
        RowMat d_cols = w.transpose() * d_out_m;
        d_in = Tensor(slot.in_ch, cache.in_h, cache.in_w);
        col2im(d_cols, slot.kernel, slot.stride, d_in, d_out.h, d_out.w);
    }
    return d_in;
}

Tensor upsample2(const Tensor& in) {
    Tensor out(in.ch, in.h * 2, in.w * 2);
    const auto ty = upsample_taps(out.h, in.h);
    const auto tx = upsample_taps(out.w, in.w);
    for (int c = 0; c < in.ch; ++c)
        for (int oy = 0; oy < out.h; ++oy)
            for (int ox = 0; ox < out.w; ++ox) {
                const auto& a = ty[oy];
                const auto& b = tx[ox];
                out.at(c, oy, ox) = a.w0 * (b.w0 * in.at(c, a.i0, b.i0) + b.w1 * in.at(c, a.i0, b.i1)) +
                                    a.w1 * (b.w0 * in.at(c, a.i1, b.i0) + b.w1 * in.at(c, a.i1, b.i1));
            }
    return out;
}

Tensor upsample2_backward(const Tensor& d_out, int in_h, int in_w) {
    Tensor d_in(d_out.ch, in_h, in_w);
    const auto ty = upsample_taps(d_out.h, in_h);
    const auto tx = upsample_taps(d_out.w, in_w);
    for (int c = 0; c < d_out.ch; ++c)
        for (int oy = 0; oy < d_out.h; ++oy)
            for (int ox = 0; ox < d_out.w; ++ox) {
                const auto& a = ty[oy];
                const auto& b = tx[ox];
                const double g = d_out.at(c, oy, ox);
                d_in.at(c, a.i0, b.i0) += a.w0 * b.w0 * g;
                d_in.at(c, a.i0, b.i1) += a.w0 * b.w1 * g;
                d_in.at(c, a.i1, b.i0) += a.w1 * b.w0 * g;
                d_in.at(c, a.i1, b.i1) += a.w1 * b.w1 * g;
            }
    return d_in;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    Tensor out(a.ch + b.ch, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

struct LayerIndex {
    std::vector<int> enc, skip, dec;
    int out = -1;
};

std::vector<LayerSlot> build_layout(const NetworkArch& arch, LayerIndex* index) {
    std::vector<LayerSlot> layout;
    std::size_t offset = 0;
    const auto add = [&](const std::string& name, int out_ch, int in_ch, int k, int stride) {
        LayerSlot slot{name, out_ch, in_ch, k, stride, 0, 0};
        slot.weight_offset = offset;
        offset += slot.weight_count();
        slot.bias_offset = offset;
        offset += static_cast<std::size_t>(out_ch);
        layout.push_back(slot);
        return static_cast<int>(layout.size()) - 1;
    };
    const int d = arch.depth;
    LayerIndex idx;
    for (int i = 0; i < d; ++i)
        idx.enc.push_back(add("enc" + std::to_string(i), arch.n_down[i],
                              i == 0 ? arch.in_channels : arch.n_down[i - 1], arch.k_down, 2));
    for (int i = 0; i < d; ++i)
        idx.skip.push_back(add("skip" + std::to_string(i), arch.n_skip[i], arch.n_down[i],
                               arch.k_skip, 1));
    idx.dec.resize(d);
    for (int i = d - 1; i >= 0; --i) {
        const int in_ch = (i == d - 1 ? arch.n_skip[d - 1] : arch.n_up[i + 1]) +
                          (i >= 1 ? arch.n_skip[i - 1] : 0);
        idx.dec[i] = add("dec" + std::to_string(i), arch.n_up[i], in_ch, arch.k_up, 1);
    }
    idx.out = add("out", arch.out_channels, arch.n_up[0], 1, 1);
    if (index) *index = idx;
    return layout;
}

struct Workspace {
    LayerIndex idx;
    std::vector<ConvCache> caches;     // one per layout slot
    std::vector<Tensor> enc_out;       // post-activation
    std::vector<Tensor> skip_out;
    std::vector<std::pair<int, int>> up_in_dims;  // per dec level, pre-upsample h/w
    std::vector<int> cat_split;                   // per dec level, channels from below
    Tensor logits;                                 // 2 x ny x nx, pre-squash
};

Tensor forward_pass(const GeneratorState& state, const Tensor& z_input, Workspace& ws) {
    const NetworkArch& arch = state.arch;
    const int d = arch.depth;
    ws.caches.resize(state.layout.size());
    ws.enc_out.resize(d);
    ws.skip_out.resize(d);
    ws.up_in_dims.assign(d, {0, 0});
    ws.cat_split.assign(d, 0);

    Tensor cur = z_input;
    for (int i = 0; i < d; ++i) {
        cur = conv_forward(state.layout[ws.idx.enc[i]], state.theta, cur, arch.leaky_slope, true,
                           ws.caches[ws.idx.enc[i]]);
        ws.enc_out[i] = cur;
    }
    for (int i = 0; i < d; ++i)
        ws.skip_out[i] = conv_forward(state.layout[ws.idx.skip[i]], state.theta, ws.enc_out[i],
                                      arch.leaky_slope, true, ws.caches[ws.idx.skip[i]]);

    cur = ws.skip_out[d - 1];
    for (int i = d - 1; i >= 0; --i) {
        ws.up_in_dims[i] = {cur.h, cur.w};
        cur = upsample2(cur);
        ws.cat_split[i] = cur.ch;
        if (i >= 1) cur = concat(cur, ws.skip_out[i - 1]);
        cur = conv_forward(state.layout[ws.idx.dec[i]], state.theta, cur, arch.leaky_slope, true,
                           ws.caches[ws.idx.dec[i]]);
    }
    ws.logits = conv_forward(state.layout[ws.idx.out], state.theta, cur, arch.leaky_slope, false,
                             ws.caches[ws.idx.out]);
    return ws.logits;
}

/// d_logits -> d_theta (layout order), reusing the forward caches.
std::vector<double> backward_pass(const GeneratorState& state, Workspace& ws, Tensor d_logits) {
    const NetworkArch& arch = state.arch;
    const int d = arch.depth;
    std::vector<double> d_theta(state.theta.size(), 0.0);

    Tensor d_cur = conv_backward(state.layout[ws.idx.out], state.theta, ws.caches[ws.idx.out],
                                 std::move(d_logits), arch.leaky_slope, false, d_theta, true);

    std::vector<Tensor> d_skip(d);
    for (int i = 0; i <= d - 1; ++i) {
        Tensor d_full = conv_backward(state.layout[ws.idx.dec[i]], state.theta,
                                      ws.caches[ws.idx.dec[i]], std::move(d_cur),
                                      arch.leaky_slope, true, d_theta, true);
        Tensor d_up(ws.cat_split[i], d_full.h, d_full.w);
        std::copy(d_full.v.begin(), d_full.v.begin() + d_up.v.size(), d_up.v.begin());
        if (i >= 1) {
            Tensor& ds = d_skip[i - 1];
            ds = Tensor(d_full.ch - d_up.ch, d_full.h, d_full.w);
            std::copy(d_full.v.begin() + d_up.v.size(), d_full.v.end(), ds.v.begin());
        }
        d_cur = upsample2_backward(d_up, ws.up_in_dims[i].first, ws.up_in_dims[i].second);
    }
    // bottom of the decoder was the deepest skip output
    if (d_skip[d - 1].v.empty()) d_skip[d - 1] = Tensor(d_cur.ch, d_cur.h, d_cur.w);
    for (std::size_t i = 0; i < d_cur.v.size(); ++i) d_skip[d - 1].v[i] += d_cur.v[i];

    Tensor d_enc_accum;
    for (int i = d - 1; i >= 0; --i) {
        Tensor d_enc = conv_backward(state.layout[ws.idx.skip[i]], state.theta,
                                     ws.caches[ws.idx.skip[i]], std::move(d_skip[i]),
                                     arch.leaky_slope, true, d_theta, true);
        if (i < d - 1)
            for (std::size_t j = 0; j < d_enc.v.size(); ++j) d_enc.v[j] += d_enc_accum.v[j];
        d_enc_accum = conv_backward(state.layout[ws.idx.enc[i]], state.theta,
                                    ws.caches[ws.idx.enc[i]], std::move(d_enc),
                                    arch.leaky_slope, true, d_theta, i > 0);
    }
    return d_theta;
}

ParamImagePair squash_to_maps(const GeneratorState& state, const Tensor& logits) {
    ParamImagePair out(state.grid);
    const std::size_t n = state.grid.npixels();
    for (std::size_t i = 0; i < n; ++i) {
        out.cbf[i] = state.arch.cbf_max * logistic(logits.v[i]);
        out.t0[i] = state.arch.t0_max * logistic(logits.v[n + i]);
    }
    return out;
}

void check_input(const GeneratorState& state, const Tensor& z_input) {
    if (z_input.ch != state.arch.in_channels || z_input.h != state.grid.ny ||
        z_input.w != state.grid.nx)
        throw std::invalid_argument("generator: conditioning input does not match the grid");
    require_finite(z_input.v, "generator input");
}

}  // namespace

void NetworkArch::validate(int nx, int ny) const {
    if (depth < 1) throw std::invalid_argument("NetworkArch: depth must be >= 1");
    const auto need = static_cast<std::size_t>(depth);
    if (n_down.size() != need || n_up.size() != need || n_skip.size() != need)
        throw std::invalid_argument("NetworkArch: per-depth filter lists must have `depth` entries");
    const int div = 1 << depth;
    if (nx % div != 0 || ny % div != 0)
        throw std::invalid_argument("NetworkArch: grid size must be divisible by 2^depth");
    if (out_channels != 2)
        throw std::invalid_argument("NetworkArch: output channels must be 2");
    if (k_down % 2 == 0 || k_up % 2 == 0 || k_skip % 2 == 0)
        throw std::invalid_argument("NetworkArch: kernel sizes must be odd");
    if (!(cbf_max > 0.0) || !(t0_max > 0.0))
        throw std::invalid_argument("NetworkArch: output ranges must be positive");
}

std::size_t parameter_count(const NetworkArch& arch) {
    const auto layout = build_layout(arch, nullptr);
    const auto& last = layout.back();
    return last.bias_offset + static_cast<std::size_t>(last.out_ch);
}

GeneratorState init_generator(const NetworkArch& arch, const ImageGrid& grid, std::uint64_t seed) {
    arch.validate(grid.nx, grid.ny);
    GeneratorState state;
    state.arch = arch;
    state.grid = grid;
    state.seed = seed;
    state.layout = build_layout(arch, nullptr);
    state.theta.assign(parameter_count(arch), 0.0);

    std::mt19937_64 rng(mix_seed(seed, 0x7E7A));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& slot : state.layout) {
        const double fan_in = static_cast<double>(slot.in_ch) * slot.kernel * slot.kernel;
        const double scale = 1.0 / std::sqrt(fan_in);
        for (std::size_t i = 0; i < slot.weight_count(); ++i) {
            const double u = unit(rng);
            state.theta[slot.weight_offset + i] =
                (arch.init == WeightInit::uniform_fan_in) ? u * scale : (2.0 * u - 1.0) * scale;
        }
        for (int i = 0; i < slot.out_ch; ++i) {
            const double u = unit(rng);
            state.theta[slot.bias_offset + i] =
                (arch.init == WeightInit::uniform_fan_in) ? u * scale : 0.0;
        }
    }

    state.z = Tensor(arch.in_channels, grid.ny, grid.nx);
    std::mt19937_64 zrng(mix_seed(seed, 0x21F0));
    std::uniform_real_distribution<double> zdist(0.0, 0.1);
    for (double& v : state.z.v) v = zdist(zrng);
    return state;
}

ParamImagePair generate(const GeneratorState& state, const Tensor& z_input) {
    check_input(state, z_input);
    Workspace ws;
    build_layout(state.arch, &ws.idx);
    const Tensor logits = forward_pass(state, z_input, ws);
    return squash_to_maps(state, logits);
}

std::vector<double> generator_backprop(const GeneratorState& state, const Tensor& z_input,
                                       const std::vector<double>& upstream_cbf,
                                       const std::vector<double>& upstream_t0) {
    check_input(state, z_input);
    const std::size_t n = state.grid.npixels();
    if (upstream_cbf.size() != n || upstream_t0.size() != n)
        throw std::invalid_argument("generator_backprop: upstream size mismatch");
    require_finite(upstream_cbf, "upstream cbf");
    require_finite(upstream_t0, "upstream t0");

    Workspace ws;
    build_layout(state.arch, &ws.idx);
    const Tensor logits = forward_pass(state, z_input, ws);

    Tensor d_logits(2, state.grid.ny, state.grid.nx);
    for (std::size_t i = 0; i < n; ++i) {
        const double s0 = logistic(logits.v[i]);
        const double s1 = logistic(logits.v[n + i]);
        d_logits.v[i] = upstream_cbf[i] * state.arch.cbf_max * s0 * (1.0 - s0);
        d_logits.v[n + i] = upstream_t0[i] * state.arch.t0_max * s1 * (1.0 - s1);
    }
    return backward_pass(state, ws, std::move(d_logits));
}

FitEval generator_fit_step(const GeneratorState& state, const Tensor& z_input,
                           const std::vector<double>& target_cbf_norm,
                           const std::vector<double>& target_t0_norm) {
    check_input(state, z_input);
    const std::size_t n = state.grid.npixels();
    if (target_cbf_norm.size() != n || target_t0_norm.size() != n)
        throw std::invalid_argument("generator_fit_step: target size mismatch");

    Workspace ws;
    build_layout(state.arch, &ws.idx);
    const Tensor logits = forward_pass(state, z_input, ws);

    FitEval eval;
    Tensor d_logits(2, state.grid.ny, state.grid.nx);
    for (std::size_t i = 0; i < n; ++i) {
        const double s0 = logistic(logits.v[i]);
        const double s1 = logistic(logits.v[n + i]);
        const double r0 = s0 - target_cbf_norm[i];
        const double r1 = s1 - target_t0_norm[i];
        eval.loss += r0 * r0 + r1 * r1;
        d_logits.v[i] = 2.0 * r0 * s0 * (1.0 - s0);
        d_logits.v[n + i] = 2.0 * r1 * s1 * (1.0 - s1);
    }
    eval.grad_theta = backward_pass(state, ws, std::move(d_logits));
    return eval;
}

Tensor perturb_input(const Tensor& z, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("perturb_input: sigma must be >= 0");
    Tensor out = z;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(mix_seed(seed, 0xA11CE));
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : out.v) v += noise(rng);
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const GeneratorState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out << "generator-checkpoint v1\n";
    out << "seed " << state.seed << "\n";
    out << "layers " << state.layout.size() << "\n";
    for (const auto& slot : state.layout)
        out << slot.name << " " << slot.out_ch << " " << slot.in_ch << " " << slot.kernel << " "
            << slot.stride << " " << slot.weight_offset << " " << slot.bias_offset << "\n";
    out << "theta " << state.theta.size() << "\n";
    std::vector<float> f32(state.theta.size());
    for (std::size_t i = 0; i < f32.size(); ++i) f32[i] = static_cast<float>(state.theta[i]);
    out.write(reinterpret_cast<const char*>(f32.data()),
              static_cast<std::streamsize>(f32.size() * sizeof(float)));
}

void load_checkpoint(const std::filesystem::path& path, GeneratorState& state) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "generator-checkpoint v1")
        throw std::runtime_error("unrecognized checkpoint header: " + path.string());
    std::string word;
    std::uint64_t seed = 0;
    std::size_t layers = 0;
    in >> word >> seed >> word >> layers;
    if (layers != state.layout.size())
        throw std::runtime_error("checkpoint layout does not match the generator");
    for (auto& slot : state.layout) {
        LayerSlot read;
        in >> read.name >> read.out_ch >> read.in_ch >> read.kernel >> read.stride >>
            read.weight_offset >> read.bias_offset;
        if (read.out_ch != slot.out_ch || read.in_ch != slot.in_ch || read.kernel != slot.kernel ||
            read.stride != slot.stride || read.weight_offset != slot.weight_offset)
            throw std::runtime_error("checkpoint layer mismatch at " + slot.name);
    }
    std::size_t count = 0;
    in >> word >> count;
    in.ignore(1);  // newline before the binary block
    if (count != state.theta.size())
        throw std::runtime_error("checkpoint parameter count mismatch");
    std::vector<float> f32(count);
    in.read(reinterpret_cast<char*>(f32.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    for (std::size_t i = 0; i < count; ++i) state.theta[i] = f32[i];
    state.seed = seed;
}

}  // namespace perfrec
