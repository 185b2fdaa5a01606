#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "perfrec/core.hpp"
#include "perfrec/perfusion.hpp"

namespace perfrec {

/// Channel-major image tensor, value at (c, y, x) = v[(c*h + y)*w + x].
struct Tensor {
    int ch = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c, int h_, int w_) : ch(c), h(h_), w(w_), v(static_cast<std::size_t>(c) * h_ * w_, 0.0) {}
    double& at(int c, int y, int x) { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
    double at(int c, int y, int x) const { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
    std::size_t size() const { return v.size(); }
};

enum class WeightInit {
    centered_fan_in,  // U[-1,1) / sqrt(fan-in); stable default
    uniform_fan_in,   // U[0,1) / sqrt(fan-in); literal uniform draw, rescaled
};

/// Hourglass generator: stride-2 downsampling convolutions, 1x1 skip
/// branches, bilinear upsampling, leaky-rectified activations, and a final
/// logistic squashing of the two output channels onto the physical boxes
/// [0, cbf_max] x [0, t0_max].
struct NetworkArch {
    int depth = 4;
    std::vector<int> n_down = {16, 32, 64, 64};
    std::vector<int> n_up = {16, 32, 64, 64};
    std::vector<int> n_skip = {4, 4, 4, 4};
    int k_down = 3;
    int k_up = 3;
    int k_skip = 1;
    double leaky_slope = 0.1;
    int in_channels = 2;
    int out_channels = 2;
    double cbf_max = 100.0;  // mL/100g/min
    double t0_max = 20.0;    // s
    WeightInit init = WeightInit::centered_fan_in;

    void validate(int nx, int ny) const;
};

/// One convolution's place inside the flat parameter vector.
struct LayerSlot {
    std::string name;
    int out_ch = 0;
    int in_ch = 0;
    int kernel = 0;
    int stride = 1;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel;
    }
};

struct GeneratorState {
    NetworkArch arch;
    ImageGrid grid;
    std::vector<LayerSlot> layout;
    std::vector<double> theta;  // all kernels and biases, flattened
    Tensor z;                   // fixed conditioning input, in_channels x ny x nx
    std::uint64_t seed = 0;
};

std::size_t parameter_count(const NetworkArch& arch);

/// Deterministic initialization: theta from the configured uniform scheme,
/// z ~ U[0, 1/10).
GeneratorState init_generator(const NetworkArch& arch, const ImageGrid& grid, std::uint64_t seed);

/// Forward pass through the network for a given conditioning input.
ParamImagePair generate(const GeneratorState& state, const Tensor& z_input);
inline ParamImagePair generate(const GeneratorState& state) { return generate(state, state.z); }

/// Exact reverse-mode gradient of the forward pass with respect to theta.
/// `upstream` holds dL/d(cbf map) and dL/d(t0 map).
std::vector<double> generator_backprop(const GeneratorState& state, const Tensor& z_input,
                                       const std::vector<double>& upstream_cbf,
                                       const std::vector<double>& upstream_t0);

/// z + i.i.d. Normal(0, sigma^2) noise; fresh draw per training step.
Tensor perturb_input(const Tensor& z, double sigma, std::uint64_t seed);

struct FitEval {
    double loss = 0.0;                // sum over both normalized maps of (g - target)^2
    std::vector<double> grad_theta;   // same layout as theta
};

/// One fused evaluation for generator training: forward pass, fitting loss
/// against a box-normalized target pair, and the exact theta gradient.
FitEval generator_fit_step(const GeneratorState& state, const Tensor& z_input,
                           const std::vector<double>& target_cbf_norm,
                           const std::vector<double>& target_t0_norm);

/// Checkpoint format: text layout header followed by little-endian float32
/// parameter values.
void save_checkpoint(const std::filesystem::path& path, const GeneratorState& state);
void load_checkpoint(const std::filesystem::path& path, GeneratorState& state);

}  // namespace perfrec
