#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "perfrec/acquisition.hpp"
#include "perfrec/core.hpp"
#include "perfrec/generator.hpp"
#include "perfrec/perfusion.hpp"
#include "perfrec/projector.hpp"

namespace perfrec {

struct SolverConfig {
    double lambda = 0.01;        // augmented-Lagrangian weight
    double eta = 0.001;          // Adam step for the U sub-problem
    double alpha = 0.01;         // generator gradient-descent step
    double epsilon = 1e-6;       // outer stop: total loss below epsilon * initial total
    int num_admm = 60;           // outer iterations
    int q_inner = 200;           // U sub-problem steps, Q
    int p_inner = 20;            // generator training steps, P
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double rollback_factor = 5.0;   // revert when loss exceeds factor * previous
    double sigma_perturb = 1.0 / 30.0;
    double cbf_init = 40.0;      // mL/100g/min
    double t0_init = 5.0;        // s
    double divergence_factor = 1e3;
    bool cache_sparse = true;    // precompute per-frame sparse projector rows
    int checkpoint_every = 0;    // outer iterations; 0 disables
    std::filesystem::path checkpoint_dir;
    std::uint64_t seed = 0;
};

/// One outer iteration of the augmented Lagrangian, evaluated after the dual
/// update: data term 1/2||Y - Ybar(U)||_W^2 plus the consensus penalty
/// lambda/2 ||U - G(Z) + V||^2 in box-normalized units.
struct LossRecord {
    int iteration = 0;
    double data_term = 0.0;
    double constraint_term = 0.0;
    double total = 0.0;
    int rollbacks = 0;  // generator rollback events during this outer iteration
};

/// The consensus image model the ADMM couples U to. The production
/// implementation wraps the convolutional generator; tests may substitute a
/// fixed image to reduce the loop to penalized weighted least squares.
class ConsensusPrior {
  public:
    virtual ~ConsensusPrior() = default;
    /// Current model output in box-normalized units (both maps in [0, 1]).
    virtual std::pair<std::vector<double>, std::vector<double>> current() const = 0;
    /// Fit the model toward a normalized target; returns rollback count.
    virtual int fit(const std::vector<double>& target_cbf, const std::vector<double>& target_t0,
                    const SolverConfig& cfg, std::uint64_t step_seed) = 0;
};

/// Deep-image-prior consensus model backed by a GeneratorState.
class GeneratorPrior : public ConsensusPrior {
  public:
    explicit GeneratorPrior(GeneratorState state);
    std::pair<std::vector<double>, std::vector<double>> current() const override;
    int fit(const std::vector<double>& target_cbf, const std::vector<double>& target_t0,
            const SolverConfig& cfg, std::uint64_t step_seed) override;
    const GeneratorState& state() const { return state_; }
    GeneratorState& state() { return state_; }

  private:
    GeneratorState state_;
};

/// Everything the joint reconstruction needs to evaluate its objective.
struct TrainerProblem {
    ImageGrid grid;
    FanBeamGeometry geom;
    ScanSchedule schedule;
    ConvolutionContext ctx;
    SinogramStack measured;
    NetworkArch arch;
};

struct SolverState {
    ParamImagePair u;              // physical units
    std::vector<double> v_cbf;     // dual, box-normalized units
    std::vector<double> v_t0;
    double cbf_scale = 100.0;      // box normalization constants
    double t0_scale = 20.0;
    std::vector<LossRecord> history;  // one record per completed outer iteration
    LossRecord initial;               // iteration 0, before any update
    int last_u_increases = 0;         // monitored objective increases in the last U loop
};

struct TrainerResult {
    ParamImagePair u;
    std::vector<double> cbv;  // mL/100g
    std::vector<double> mtt;  // s
    std::vector<LossRecord> history;
    LossRecord initial;
    int completed_iterations = 0;
    int total_rollbacks = 0;
};

struct DataTermResult {
    double loss = 0.0;
    ParamGradient grad;  // with respect to the physical U maps
};

/// 1/2 sum_i w_i (y_i - ybar_i)^2 with ybar = A vec(X(U)); gradient chains
/// through the dynamic projector adjoint and the convolution model.
DataTermResult data_term(const ParamImagePair& u, const SinogramStack& measured,
                         const ConvolutionContext& ctx, const ScanSchedule& schedule,
                         const DynamicProjector& projector);

/// Q Adam steps on the U sub-problem at fixed generator output and dual; the
/// iterate stays clamped to the physical boxes. Optimization runs in
/// box-normalized coordinates so the published step size moves both maps at
/// comparable rates.
void solve_u_subproblem(SolverState& state, const TrainerProblem& problem,
                        const DynamicProjector& projector, const ConsensusPrior& prior,
                        const SolverConfig& cfg);

struct GeneratorFitStats {
    int steps = 0;
    int rollbacks = 0;
    double first_loss = 0.0;
    double last_loss = 0.0;
};

/// P gradient-descent steps on ||U + V - G(Z_perturbed)||^2 with a fresh
/// input perturbation per step; reverts a step when the fitting loss jumps
/// past rollback_factor times the previous value.
GeneratorFitStats train_generator(GeneratorState& state, const std::vector<double>& target_cbf,
                                  const std::vector<double>& target_t0, const SolverConfig& cfg,
                                  std::uint64_t step_seed);

/// V <- V + U - G(Z), all in box-normalized units.
void update_dual(SolverState& state, const ConsensusPrior& prior);

TrainerResult run_trainer(const TrainerProblem& problem, const SolverConfig& cfg);
TrainerResult run_trainer(const TrainerProblem& problem, const SolverConfig& cfg,
                          ConsensusPrior& prior);

void write_loss_csv(const std::filesystem::path& path, const LossRecord& initial,
                    const std::vector<LossRecord>& history);

}  // namespace perfrec
