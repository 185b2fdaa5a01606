#include "perfrec/solver.hpp"

#include "perfrec/adam.hpp"
#include "perfrec/io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace perfrec {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (salt + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2));
    x ^= x >> 30; x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27; x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

struct FlatMeasurement {
    std::vector<double> y;
    std::vector<double> w;
};

FlatMeasurement flatten(const SinogramStack& stack) {
    FlatMeasurement flat;
    flat.y.reserve(stack.ray_count());
    flat.w.reserve(stack.ray_count());
    for (std::size_t t = 0; t < stack.frames.size(); ++t) {
        flat.y.insert(flat.y.end(), stack.frames[t].data.begin(), stack.frames[t].data.end());
        flat.w.insert(flat.w.end(), stack.weights[t].begin(), stack.weights[t].end());
    }
    return flat;
}

double weighted_data_loss(const std::vector<double>& y, const std::vector<double>& w,
                          const std::vector<double>& ybar, std::vector<double>& residual_w) {
    double loss = 0.0;
    residual_w.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = ybar[i] - y[i];
        loss += 0.5 * w[i] * r * r;
        residual_w[i] = w[i] * r;  // gradient of the loss w.r.t. ybar
    }
    return loss;
}

struct NormalizedPair {
    std::vector<double> cbf;
    std::vector<double> t0;
};

NormalizedPair normalize(const ParamImagePair& u, const NetworkArch& arch) {
    NormalizedPair n;
    n.cbf.resize(u.cbf.size());
    n.t0.resize(u.t0.size());
    for (std::size_t i = 0; i < u.cbf.size(); ++i) {
        n.cbf[i] = u.cbf[i] / arch.cbf_max;
        n.t0[i] = u.t0[i] / arch.t0_max;
    }
    return n;
}

double consensus_loss(const NormalizedPair& u_norm, const std::vector<double>& g_cbf,
                      const std::vector<double>& g_t0, const std::vector<double>& v_cbf,
                      const std::vector<double>& v_t0, double lambda) {
    double sum = 0.0;
    for (std::size_t i = 0; i < u_norm.cbf.size(); ++i) {
        const double a = u_norm.cbf[i] - g_cbf[i] + v_cbf[i];
        const double b = u_norm.t0[i] - g_t0[i] + v_t0[i];
        sum += a * a + b * b;
    }
    return 0.5 * lambda * sum;
}

void dump_state(const SolverState& state, const std::filesystem::path& dir,
                const std::string& reason) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    io::write_image(dir / "abort_cbf.f32", state.u.cbf, state.u.grid, "mL/100g/min",
                    {{"abort_reason", reason}});
    io::write_image(dir / "abort_t0.f32", state.u.t0, state.u.grid, "s",
                    {{"abort_reason", reason}});
    write_loss_csv(dir / "abort_loss.csv", state.initial, state.history);
}

}  // namespace

GeneratorPrior::GeneratorPrior(GeneratorState state) : state_(std::move(state)) {}

std::pair<std::vector<double>, std::vector<double>> GeneratorPrior::current() const {
    const ParamImagePair out = generate(state_);
    std::vector<double> cbf(out.cbf.size()), t0(out.t0.size());
    for (std::size_t i = 0; i < cbf.size(); ++i) {
        cbf[i] = out.cbf[i] / state_.arch.cbf_max;
        t0[i] = out.t0[i] / state_.arch.t0_max;
    }
    return {std::move(cbf), std::move(t0)};
}

int GeneratorPrior::fit(const std::vector<double>& target_cbf, const std::vector<double>& target_t0,
                        const SolverConfig& cfg, std::uint64_t step_seed) {
    const GeneratorFitStats stats = train_generator(state_, target_cbf, target_t0, cfg, step_seed);
    return stats.rollbacks;
}

DataTermResult data_term(const ParamImagePair& u, const SinogramStack& measured,
                         const ConvolutionContext& ctx, const ScanSchedule& schedule,
                         const DynamicProjector& projector) {
    const TimeGrid tg = schedule.time_grid();
    const DynamicImage x = synthesize_dynamic(u, ctx, tg);
    const Mat xm = stack_frames(x.frames);

    std::vector<double> ybar;
    projector.forward(xm, ybar);
    const FlatMeasurement flat = flatten(measured);
    if (flat.y.size() != ybar.size())
        throw std::invalid_argument("data_term: measurement does not match the schedule");

    DataTermResult result;
    std::vector<double> residual_w;
    result.loss = weighted_data_loss(flat.y, flat.w, ybar, residual_w);

    Mat upstream;
    projector.adjoint(residual_w, upstream);
    result.grad = grad_dynamic(u, ctx, tg, upstream);
    return result;
}

void solve_u_subproblem(SolverState& state, const TrainerProblem& problem,
                        const DynamicProjector& projector, const ConsensusPrior& prior,
                        const SolverConfig& cfg) {
    const std::size_t n = state.u.cbf.size();
    const NetworkArch& arch = problem.arch;
    const auto [g_cbf, g_t0] = prior.current();

    // optimize in box-normalized coordinates: z = [cbf/cbf_max ; t0/t0_max]
    std::vector<double> z(2 * n), grad(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = state.u.cbf[i] / arch.cbf_max;
        z[n + i] = state.u.t0[i] / arch.t0_max;
    }
    AdamOptimizer adam(2 * n, cfg.eta, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

    double previous = 0.0;
    int increases = 0;
    for (int q = 0; q < cfg.q_inner; ++q) {
        const DataTermResult dt = data_term(state.u, problem.measured, problem.ctx,
                                            problem.schedule, projector);
        double penalty = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double rc = z[i] - g_cbf[i] + state.v_cbf[i];
            const double rt = z[n + i] - g_t0[i] + state.v_t0[i];
            penalty += rc * rc + rt * rt;
            grad[i] = dt.grad.d_cbf[i] * arch.cbf_max + cfg.lambda * rc;
            grad[n + i] = dt.grad.d_t0[i] * arch.t0_max + cfg.lambda * rt;
        }
        const double objective = dt.loss + 0.5 * cfg.lambda * penalty;
        if (!std::isfinite(objective)) {
            dump_state(state, cfg.checkpoint_dir, "non-finite inner objective");
            throw std::runtime_error("solve_u_subproblem: non-finite objective");
        }
        if (q > 0 && objective > previous) ++increases;
        previous = objective;

        adam.update(z, grad);
        for (std::size_t i = 0; i < 2 * n; ++i) z[i] = std::clamp(z[i], 0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            state.u.cbf[i] = z[i] * arch.cbf_max;
            state.u.t0[i] = z[n + i] * arch.t0_max;
        }
    }
    state.last_u_increases = increases;
}

GeneratorFitStats train_generator(GeneratorState& state, const std::vector<double>& target_cbf,
                                  const std::vector<double>& target_t0, const SolverConfig& cfg,
                                  std::uint64_t step_seed) {
    GeneratorFitStats stats;
    std::vector<double> prev_theta = state.theta;
    double prev_loss = 0.0;
    bool have_prev = false;

    for (int p = 0; p < cfg.p_inner; ++p) {
        const Tensor zp = perturb_input(state.z, cfg.sigma_perturb, mix_seed(step_seed, p));
        const FitEval eval = generator_fit_step(state, zp, target_cbf, target_t0);
        if (p == 0) stats.first_loss = eval.loss;
        stats.last_loss = eval.loss;

        if (have_prev && eval.loss > cfg.rollback_factor * prev_loss) {
            state.theta = prev_theta;  // revert the step that caused the spike
            ++stats.rollbacks;
            ++stats.steps;
            continue;
        }
        prev_theta = state.theta;
        prev_loss = eval.loss;
        have_prev = true;
        for (std::size_t i = 0; i < state.theta.size(); ++i)
            state.theta[i] -= cfg.alpha * eval.grad_theta[i];
        ++stats.steps;
    }
    return stats;
}

void update_dual(SolverState& state, const ConsensusPrior& prior) {
    const auto [g_cbf, g_t0] = prior.current();
    const double cbf_max = state.cbf_scale;
    const double t0_max = state.t0_scale;
    for (std::size_t i = 0; i < state.v_cbf.size(); ++i) {
        state.v_cbf[i] += state.u.cbf[i] / cbf_max - g_cbf[i];
        state.v_t0[i] += state.u.t0[i] / t0_max - g_t0[i];
    }
}

TrainerResult run_trainer(const TrainerProblem& problem, const SolverConfig& cfg) {
    GeneratorPrior prior(init_generator(problem.arch, problem.grid, cfg.seed));
    return run_trainer(problem, cfg, prior);
}

TrainerResult run_trainer(const TrainerProblem& problem, const SolverConfig& cfg,
                          ConsensusPrior& prior) {
    problem.measured.validate();
    const std::size_t n = problem.grid.npixels();
    const DynamicProjector projector(problem.grid, problem.geom, problem.schedule,
                                     cfg.cache_sparse);

    SolverState state;
    state.u = ParamImagePair(problem.grid, cfg.cbf_init, cfg.t0_init);
    state.v_cbf.assign(n, 0.0);
    state.v_t0.assign(n, 0.0);
    state.cbf_scale = problem.arch.cbf_max;
    state.t0_scale = problem.arch.t0_max;

    const auto record_losses = [&](int iteration, int rollbacks) {
        const DataTermResult dt = data_term(state.u, problem.measured, problem.ctx,
                                            problem.schedule, projector);
        const auto [g_cbf, g_t0] = prior.current();
        LossRecord rec;
        rec.iteration = iteration;
        rec.data_term = dt.loss;
        rec.constraint_term = consensus_loss(normalize(state.u, problem.arch), g_cbf, g_t0,
                                             state.v_cbf, state.v_t0, cfg.lambda);
        rec.total = rec.data_term + rec.constraint_term;
        rec.rollbacks = rollbacks;
        return rec;
    };

    state.initial = record_losses(0, 0);
    if (!std::isfinite(state.initial.total))
        throw std::runtime_error("run_trainer: non-finite initial loss");

    TrainerResult result;
    for (int k = 1; k <= cfg.num_admm; ++k) {
        solve_u_subproblem(state, problem, projector, prior, cfg);

        const NormalizedPair u_norm = normalize(state.u, problem.arch);
        std::vector<double> target_cbf(n), target_t0(n);
        for (std::size_t i = 0; i < n; ++i) {
            target_cbf[i] = u_norm.cbf[i] + state.v_cbf[i];
            target_t0[i] = u_norm.t0[i] + state.v_t0[i];
        }
        const int rollbacks = prior.fit(target_cbf, target_t0, cfg, mix_seed(cfg.seed, 0xF17 + k));
        result.total_rollbacks += rollbacks;

        update_dual(state, prior);

        LossRecord rec = record_losses(k, rollbacks);
        state.history.push_back(rec);
        ++result.completed_iterations;

        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
            k % cfg.checkpoint_every == 0) {
            std::filesystem::create_directories(cfg.checkpoint_dir);
            if (auto* gen = dynamic_cast<GeneratorPrior*>(&prior))
                save_checkpoint(cfg.checkpoint_dir / ("theta_" + std::to_string(k) + ".ckpt"),
                                gen->state());
        }
        if (!std::isfinite(rec.total) || rec.total > cfg.divergence_factor * state.initial.total) {
            dump_state(state, cfg.checkpoint_dir, "divergence");
            throw std::runtime_error("run_trainer: loss diverged at outer iteration " +
                                     std::to_string(k));
        }
        if (rec.total < cfg.epsilon * state.initial.total) break;
    }

    result.u = state.u;
    result.history = state.history;
    result.initial = state.initial;

    // report CBV/MTT on a fine quadrature grid so discretization does not
    // leak into the derived maps
    ConvolutionContext fine_ctx = problem.ctx;
    fine_ctx.dt = 0.02;
    const TimeGrid fine(4000, fine_ctx.dt, 0.5 * fine_ctx.dt);
    const CbvMttResult derived = derive_cbv_mtt(result.u, fine_ctx, fine);
    result.cbv = derived.cbv;
    result.mtt = derived.mtt;
    return result;
}

void write_loss_csv(const std::filesystem::path& path, const LossRecord& initial,
                    const std::vector<LossRecord>& history) {
    std::vector<std::vector<double>> rows;
    rows.push_back({0.0, initial.data_term, initial.constraint_term, initial.total});
    for (const auto& rec : history)
        rows.push_back({static_cast<double>(rec.iteration), rec.data_term, rec.constraint_term,
                        rec.total});
    io::write_csv(path, {"iteration", "data_term", "constraint_term", "total"}, rows);
}

}  // namespace perfrec
