#include <doctest.h>

#include "perfrec/generator.hpp"

#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace perfrec;

namespace {

NetworkArch small_arch() {
    NetworkArch arch;
    arch.depth = 2;
    arch.n_down = {6, 8};
    arch.n_up = {5, 7};
    arch.n_skip = {3, 4};
    return arch;
}

const ImageGrid kGrid(16, 16, 1.0, 1.0);

std::vector<double> slice(const std::vector<double>& theta, std::size_t offset, std::size_t count) {
    return {theta.begin() + offset, theta.begin() + offset + count};
}

const LayerSlot& find_slot(const GeneratorState& state, const std::string& name) {
    for (const auto& slot : state.layout)
        if (slot.name == name) return slot;
    REQUIRE(false);
    return state.layout.front();
}

std::vector<double> leaky(std::vector<double> v, double slope) {
    for (double& x : v)
        if (x < 0.0) x *= slope;
    return v;
}

/// Plain-loop reference of the whole forward pass (depth 2), independent of
/// the library's im2col/GEMM path.
std::pair<std::vector<double>, std::vector<double>> reference_forward(const GeneratorState& state,
                                                                      const Tensor& z) {
    const NetworkArch& arch = state.arch;
    const auto conv = [&](const std::vector<double>& in, int ch, int h, int w,
                          const std::string& name, int stride) {
        const LayerSlot& slot = find_slot(state, name);
        return oracle::conv2d_reference(in, ch, h, w,
                                        slice(state.theta, slot.weight_offset, slot.weight_count()),
                                        slice(state.theta, slot.bias_offset, slot.out_ch),
                                        slot.out_ch, slot.kernel, stride);
    };
    const auto upsample = [](const std::vector<double>& in, int ch, int h, int w) {
        std::vector<double> out(static_cast<std::size_t>(ch) * 4 * h * w);
        const auto tap = [](int o, int n, int& i0, int& i1, double& f) {
            const double src = (o + 0.5) / 2.0 - 0.5;
            i0 = static_cast<int>(std::floor(src));
            f = src - i0;
            if (i0 < 0) { i0 = 0; f = 0.0; }
            i1 = i0 + 1;
            if (i1 > n - 1) { i1 = n - 1; f = 0.0; }
        };
        for (int c = 0; c < ch; ++c)
            for (int oy = 0; oy < 2 * h; ++oy)
                for (int ox = 0; ox < 2 * w; ++ox) {
                    int y0, y1, x0, x1;
                    double fy, fx;
                    tap(oy, h, y0, y1, fy);
                    tap(ox, w, x0, x1, fx);
                    const auto at = [&](int yy, int xx) {
                        return in[(static_cast<std::size_t>(c) * h + yy) * w + xx];
                    };
                    out[(static_cast<std::size_t>(c) * 2 * h + oy) * 2 * w + ox] =
                        (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                        fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
                }
        return out;
    };

    const int n = kGrid.nx;
    auto e0 = leaky(conv(z.v, 2, n, n, "enc0", 2), arch.leaky_slope);                  // 6 x 8 x 8
    auto e1 = leaky(conv(e0, 6, n / 2, n / 2, "enc1", 2), arch.leaky_slope);           // 8 x 4 x 4
    auto s0 = leaky(conv(e0, 6, n / 2, n / 2, "skip0", 1), arch.leaky_slope);          // 3 x 8 x 8
    auto s1 = leaky(conv(e1, 8, n / 4, n / 4, "skip1", 1), arch.leaky_slope);          // 4 x 4 x 4
    auto up1 = upsample(s1, 4, n / 4, n / 4);                                          // 4 x 8 x 8
    std::vector<double> cat1 = up1;
    cat1.insert(cat1.end(), s0.begin(), s0.end());                                     // 7 x 8 x 8
    auto d1 = leaky(conv(cat1, 7, n / 2, n / 2, "dec1", 1), arch.leaky_slope);         // 7 x 8 x 8
    auto up0 = upsample(d1, 7, n / 2, n / 2);                                          // 7 x 16 x 16
    auto d0 = leaky(conv(up0, 7, n, n, "dec0", 1), arch.leaky_slope);                  // 5 x 16 x 16
    auto logits = conv(d0, 5, n, n, "out", 1);                                         // 2 x 16 x 16

    const std::size_t npx = kGrid.npixels();
    std::vector<double> cbf(npx), t0(npx);
    for (std::size_t i = 0; i < npx; ++i) {
        cbf[i] = arch.cbf_max / (1.0 + std::exp(-logits[i]));
        t0[i] = arch.t0_max / (1.0 + std::exp(-logits[npx + i]));
    }
    return {cbf, t0};
}

}  // namespace

TEST_CASE("initialization") {
    const NetworkArch arch = small_arch();
    SUBCASE("same seed reproduces theta and z") {
        const GeneratorState a = init_generator(arch, kGrid, 5);
        const GeneratorState b = init_generator(arch, kGrid, 5);
        CHECK(a.theta == b.theta);
        CHECK(a.z.v == b.z.v);
        const GeneratorState c = init_generator(arch, kGrid, 6);
        CHECK(a.theta != c.theta);
    }
    SUBCASE("conditioning input lies in [0, 0.1)") {
        const GeneratorState state = init_generator(arch, kGrid, 3);
        for (double v : state.z.v) {
            CHECK(v >= 0.0);
            CHECK(v < 0.1);
        }
    }
    SUBCASE("parameter count equals the closed-form layer sum") {
        const auto count_conv = [](int out, int in, int k) {
            return static_cast<std::size_t>(out) * in * k * k + out;
        };
        // enc0, enc1, skip0, skip1, dec1, dec0, out
        const std::size_t expected = count_conv(6, 2, 3) + count_conv(8, 6, 3) +
                                     count_conv(3, 6, 1) + count_conv(4, 8, 1) +
                                     count_conv(7, 7, 3) + count_conv(5, 7, 3) +
                                     count_conv(2, 5, 1);
        CHECK(parameter_count(arch) == expected);
        const GeneratorState state = init_generator(arch, kGrid, 1);
        CHECK(state.theta.size() == expected);
    }
    SUBCASE("grid must divide by 2^depth") {
        CHECK_THROWS_AS(init_generator(arch, ImageGrid(18, 18, 1.0, 1.0), 1),
                        std::invalid_argument);
    }
    SUBCASE("uniform init mode stays non-negative before scaling") {
        NetworkArch uniform = arch;
        uniform.init = WeightInit::uniform_fan_in;
        const GeneratorState state = init_generator(uniform, kGrid, 2);
        for (double v : state.theta) CHECK(v >= 0.0);
    }
}

TEST_CASE("forward pass") {
    const NetworkArch arch = small_arch();
    GeneratorState state = init_generator(arch, kGrid, 11);

    SUBCASE("all-zero parameters give the midpoint of both boxes") {
        std::fill(state.theta.begin(), state.theta.end(), 0.0);
        const ParamImagePair out = generate(state);
        for (double v : out.cbf) CHECK(v == doctest::Approx(arch.cbf_max / 2.0));
        for (double v : out.t0) CHECK(v == doctest::Approx(arch.t0_max / 2.0));
    }
    SUBCASE("outputs stay inside the physical boxes for random parameters") {
        std::mt19937_64 rng(23);
        std::normal_distribution<double> big(0.0, 10.0);
        for (double& v : state.theta) v = big(rng);
        const ParamImagePair out = generate(state);
        for (double v : out.cbf) {
            CHECK(v >= 0.0);
            CHECK(v <= arch.cbf_max);
        }
        for (double v : out.t0) {
            CHECK(v >= 0.0);
            CHECK(v <= arch.t0_max);
        }
    }
    SUBCASE("matches the plain-loop reference to 1e-6 relative") {
        const ParamImagePair out = generate(state);
        const auto [ref_cbf, ref_t0] = reference_forward(state, state.z);
        for (std::size_t i = 0; i < out.cbf.size(); ++i) {
            CHECK(out.cbf[i] == doctest::Approx(ref_cbf[i]).epsilon(1e-6));
            CHECK(out.t0[i] == doctest::Approx(ref_t0[i]).epsilon(1e-6));
        }
    }
    SUBCASE("deterministic given theta and input") {
        const ParamImagePair a = generate(state);
        const ParamImagePair b = generate(state);
        CHECK(a.cbf == b.cbf);
        CHECK(a.t0 == b.t0);
    }
}

TEST_CASE("backprop") {
    const NetworkArch arch = small_arch();
    const GeneratorState state = init_generator(arch, kGrid, 29);
    const std::size_t n = kGrid.npixels();

    SUBCASE("zero upstream gives a zero gradient") {
        const auto grad = generator_backprop(state, state.z, std::vector<double>(n, 0.0),
                                             std::vector<double>(n, 0.0));
        for (double g : grad) CHECK(g == 0.0);
    }
    SUBCASE("gradient layout covers exactly theta (z is not a parameter)") {
        const auto grad = generator_backprop(state, state.z, std::vector<double>(n, 1.0),
                                             std::vector<double>(n, 1.0));
        CHECK(grad.size() == state.theta.size());
        CHECK(grad.size() == parameter_count(arch));
    }
    SUBCASE("directional derivatives match central differences to 1e-6") {
        const auto up_cbf = oracle::random_vector(n, 100);
        const auto up_t0 = oracle::random_vector(n, 101);
        const auto grad = generator_backprop(state, state.z, up_cbf, up_t0);
        const auto phi = [&](const std::vector<double>& theta) {
            GeneratorState trial = state;
            trial.theta = theta;
            const ParamImagePair out = generate(trial);
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                acc += up_cbf[i] * out.cbf[i] + up_t0[i] * out.t0[i];
            return acc;
        };
        const auto fd_at = [&](const std::vector<double>& dir, double h) {
            std::vector<double> plus = state.theta, minus = state.theta;
            for (std::size_t i = 0; i < dir.size(); ++i) {
                plus[i] += h * dir[i];
                minus[i] -= h * dir[i];
            }
            return (phi(plus) - phi(minus)) / (2.0 * h);
        };
        // central differences are only a valid oracle away from the
        // leaky-rectifier kinks; a probe whose estimate moves between two
        // step sizes crossed one and is discarded
        double grad_norm = 0.0;
        for (double g : grad) grad_norm += g * g;
        grad_norm = std::sqrt(grad_norm);
        int valid = 0;
        for (int trial = 0; trial < 20; ++trial) {
            const auto dir = oracle::random_vector(state.theta.size(), 300 + trial);
            double analytic = 0.0, dir_norm = 0.0;
            for (std::size_t i = 0; i < grad.size(); ++i) {
                analytic += grad[i] * dir[i];
                dir_norm += dir[i] * dir[i];
            }
            dir_norm = std::sqrt(dir_norm);
            const double fd = fd_at(dir, 1e-7);
            const double fd_check = fd_at(dir, 5e-8);
            const double scale = grad_norm * dir_norm;  // Cauchy-Schwarz bound
            if (std::abs(fd - fd_check) > 1e-5 * scale) continue;
            ++valid;
            CHECK(std::abs(analytic - fd) <= 1e-6 * (scale + std::abs(fd)));
        }
        CHECK(valid >= 12);
    }
    SUBCASE("backprop is linear in the upstream signal") {
        const auto g1_c = oracle::random_vector(n, 7);
        const auto g1_t = oracle::random_vector(n, 8);
        const auto g2_c = oracle::random_vector(n, 9);
        const auto g2_t = oracle::random_vector(n, 10);
        std::vector<double> combo_c(n), combo_t(n);
        for (std::size_t i = 0; i < n; ++i) {
            combo_c[i] = 2.5 * g1_c[i] + g2_c[i];
            combo_t[i] = 2.5 * g1_t[i] + g2_t[i];
        }
        const auto a = generator_backprop(state, state.z, g1_c, g1_t);
        const auto b = generator_backprop(state, state.z, g2_c, g2_t);
        const auto c = generator_backprop(state, state.z, combo_c, combo_t);
        for (std::size_t i = 0; i < c.size(); ++i)
            CHECK(c[i] == doctest::Approx(2.5 * a[i] + b[i]).epsilon(1e-10));
    }
}

TEST_CASE("input perturbation") {
    const GeneratorState state = init_generator(small_arch(), kGrid, 2);
    SUBCASE("sigma zero is the identity") {
        const Tensor out = perturb_input(state.z, 0.0, 99);
        CHECK(out.v == state.z.v);
    }
    SUBCASE("sample standard deviation within 2% of 1/30") {
        Tensor big(1, 250, 400);  // 1e5 draws
        const Tensor noisy = perturb_input(big, 1.0 / 30.0, 123);
        double mean = 0.0;
        for (double v : noisy.v) mean += v;
        mean /= static_cast<double>(noisy.v.size());
        double var = 0.0;
        for (double v : noisy.v) var += (v - mean) * (v - mean);
        var /= static_cast<double>(noisy.v.size() - 1);
        CHECK(std::sqrt(var) == doctest::Approx(1.0 / 30.0).epsilon(0.02));
    }
    SUBCASE("same seed gives the same perturbation") {
        const Tensor a = perturb_input(state.z, 0.05, 77);
        const Tensor b = perturb_input(state.z, 0.05, 77);
        CHECK(a.v == b.v);
    }
}

TEST_CASE("checkpoint round-trip at float32 precision") {
    const NetworkArch arch = small_arch();
    GeneratorState state = init_generator(arch, kGrid, 13);
    const auto path = std::filesystem::temp_directory_path() / "perfrec_gen.ckpt";
    save_checkpoint(path, state);
    GeneratorState restored = init_generator(arch, kGrid, 14);
    load_checkpoint(path, restored);
    for (std::size_t i = 0; i < state.theta.size(); ++i)
        CHECK(restored.theta[i] == doctest::Approx(state.theta[i]).epsilon(1e-6));
    CHECK(restored.seed == 13);
}
