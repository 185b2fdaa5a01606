#include "perfrec/harness.hpp"

#include "perfrec/baseline.hpp"
#include "perfrec/io.hpp"
#include "perfrec/metrics.hpp"
#include "perfrec/projector.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace perfrec {

namespace {

namespace fs = std::filesystem;

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
}

ProtocolConfig protocol_with_seed(const ExperimentConfig& cfg) {
    ProtocolConfig p = cfg.protocol;
    p.seed = cfg.seed;
    return p;
}

fs::path phantom_dir(const ExperimentConfig& cfg) { return cfg.out_dir / "phantom"; }
fs::path sim_dir(const ExperimentConfig& cfg, const std::string& level) {
    return cfg.out_dir / "sim" / level;
}

void require_exists(const std::vector<fs::path>& paths) {
    std::vector<std::string> missing;
    for (const auto& p : paths)
        if (!fs::exists(p)) missing.push_back(p.string());
    if (!missing.empty()) {
        std::string msg = "missing inputs:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw std::runtime_error(msg);
    }
}

void write_stack(const fs::path& dir, const SinogramStack& stack, const ScanSchedule& schedule) {
    fs::create_directories(dir);
    std::vector<double> flat, weights;
    for (std::size_t t = 0; t < stack.frames.size(); ++t) {
        flat.insert(flat.end(), stack.frames[t].data.begin(), stack.frames[t].data.end());
        weights.insert(weights.end(), stack.weights[t].begin(), stack.weights[t].end());
    }
    io::write_f32(dir / "stack.f32", flat);
    io::write_f32(dir / "weights.f32", weights);

    io::Meta meta;
    meta["frames"] = std::to_string(stack.frames.size());
    meta["n_det"] = std::to_string(stack.geom.n_det);
    meta["det_pitch"] = format_double(stack.geom.det_pitch);
    meta["source_to_iso"] = format_double(stack.geom.source_to_iso);
    meta["source_to_detector"] = format_double(stack.geom.source_to_detector);
    meta["units"] = "line-integral";
    for (std::size_t t = 0; t < stack.frames.size(); ++t) {
        std::ostringstream angles;
        angles << std::setprecision(17);
        for (std::size_t v = 0; v < stack.frames[t].angles.size(); ++v)
            angles << stack.frames[t].angles[v] << (v + 1 < stack.frames[t].angles.size() ? "," : "");
        meta["angles_" + std::to_string(t)] = angles.str();
        meta["time_" + std::to_string(t)] = format_double(schedule.frame_times[t]);
    }
    io::write_meta(dir / "stack.f32", meta);
}

SinogramStack read_stack(const fs::path& dir, const ExperimentConfig& cfg,
                         const ScanSchedule& schedule) {
    require_exists({dir / "stack.f32", dir / "weights.f32"});
    const auto flat = io::read_f32(dir / "stack.f32");
    const auto weights = io::read_f32(dir / "weights.f32");
    SinogramStack stack;
    stack.geom = cfg.geom;
    std::size_t offset = 0;
    for (const auto& views : schedule.frame_views) {
        Sinogram frame(cfg.geom, views.angles);
        const std::size_t count = frame.data.size();
        if (offset + count > flat.size())
            throw std::runtime_error("stack file does not match the schedule: " + dir.string());
        std::copy(flat.begin() + offset, flat.begin() + offset + count, frame.data.begin());
        stack.frames.push_back(std::move(frame));
        stack.weights.emplace_back(weights.begin() + offset, weights.begin() + offset + count);
        offset += count;
    }
    if (offset != flat.size())
        throw std::runtime_error("stack file has trailing data: " + dir.string());
    return stack;
}

void write_map_outputs(const fs::path& dir, const ImageGrid& grid,
                       const std::vector<double>& cbf, const std::vector<double>* t0,
                       const std::vector<double>& cbv, const std::vector<double>& mtt) {
    fs::create_directories(dir);
    io::write_image(dir / "cbf.f32", cbf, grid, "mL/100g/min");
    if (t0) io::write_image(dir / "t0.f32", *t0, grid, "s");
    io::write_image(dir / "cbv.f32", cbv, grid, "mL/100g");
    io::write_image(dir / "mtt.f32", mtt, grid, "s");
    // preview windows follow the usual perfusion display settings
    io::write_pgm(dir / "cbf.pgm", cbf, grid, 60.0, 30.0);
    io::write_pgm(dir / "mtt.pgm", mtt, grid, 18.0, 9.0);
    if (t0) io::write_pgm(dir / "t0.pgm", *t0, grid, 20.0, 10.0);
    io::write_pgm(dir / "cbv.pgm", cbv, grid, 8.0, 4.0);
}

struct SimParts {
    PhantomInstance phantom;
    ScanSchedule schedule;
    TimeGrid tg;
    DynamicImage truth_dynamic;
};

SimParts build_sim_parts(const ExperimentConfig& cfg) {
    SimParts parts;
    parts.phantom = build_phantom(cfg.phantom, cfg.grid);
    parts.schedule = make_schedule(protocol_with_seed(cfg));
    parts.tg = parts.schedule.time_grid();
    parts.truth_dynamic = ground_truth_dynamic(parts.phantom, cfg.phantom.aif, parts.tg);
    return parts;
}

std::size_t pick_tissue_pixel(const PhantomInstance& phantom, TissueLabel label) {
    // deterministic representative pixel: centroid-most pixel of the label
    double sx = 0.0, sy = 0.0;
    std::size_t count = 0;
    const auto& grid = phantom.grid;
    for (int iy = 0; iy < grid.ny; ++iy)
        for (int ix = 0; ix < grid.nx; ++ix)
            if (phantom.labels[static_cast<std::size_t>(iy) * grid.nx + ix] == label) {
                sx += ix;
                sy += iy;
                ++count;
            }
    if (count == 0) throw std::runtime_error("no pixel with label " + to_string(label));
    const double cx = sx / count, cy = sy / count;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::max();
    for (int iy = 0; iy < grid.ny; ++iy)
        for (int ix = 0; ix < grid.nx; ++ix) {
            const std::size_t idx = static_cast<std::size_t>(iy) * grid.nx + ix;
            if (phantom.labels[idx] != label) continue;
            const double d = (ix - cx) * (ix - cx) + (iy - cy) * (iy - cy);
            if (d < best_d) {
                best_d = d;
                best = idx;
            }
        }
    return best;
}

DynamicImage baseline_frames(const ExperimentConfig& cfg, const SinogramStack& stack,
                             const ScanSchedule& schedule) {
    const DynamicImage frames = fbp_time_resolved(stack, schedule, cfg.grid);
    return denoise_spatiotemporal(frames);
}

TacSet tacs_from_frames(const ExperimentConfig& cfg, const DynamicImage& frames,
                        const ScanSchedule& schedule) {
    TacSet tacs;
    tacs.grid = cfg.grid;
    std::vector<double> scan_times(schedule.scans);
    for (int s = 0; s < schedule.scans; ++s)
        scan_times[s] = (s + 0.5) * schedule.seconds_per_rotation;
    tacs.time_grid = TimeGrid::from_times(scan_times);
    tacs.curves = stack_frames(frames.frames);
    tacs.aif_samples = sample_aif(cfg.phantom.aif, scan_times);
    return tacs;
}

}  // namespace

std::filesystem::path level_dir(const ExperimentConfig& cfg, const std::string& method,
                                const std::string& level) {
    return cfg.out_dir / "recon" / method / level;
}

void cmd_phantom(const ExperimentConfig& cfg) {
    const PhantomInstance phantom = build_phantom(cfg.phantom, cfg.grid);
    const fs::path dir = phantom_dir(cfg);
    fs::create_directories(dir);

    std::vector<std::uint8_t> labels(phantom.labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = static_cast<std::uint8_t>(phantom.labels[i]);
    io::write_labels(dir / "labels.u8", labels, cfg.grid);
    io::write_image(dir / "cbf.f32", phantom.cbf, cfg.grid, "mL/100g/min");
    io::write_image(dir / "t0.f32", phantom.t0, cfg.grid, "s");
    io::write_image(dir / "cbv.f32", phantom.cbv, cfg.grid, "mL/100g");
    io::write_image(dir / "mtt.f32", phantom.mtt, cfg.grid, "s");
    io::write_image(dir / "mu0.f32", phantom.mu0, cfg.grid, "1/mm");

    std::vector<std::vector<double>> aif_rows;
    for (double t = 0.0; t <= 70.0 + 1e-9; t += 0.1)
        aif_rows.push_back({t, sample_aif(cfg.phantom.aif, t)});
    io::write_csv(dir / "aif.csv", {"t_s", "enhancement_per_mm"}, aif_rows);

    write_experiment_config(cfg.out_dir / "config.txt", cfg);
    refresh_manifest(cfg);
}

void cmd_simulate(const ExperimentConfig& cfg) {
    require_exists({phantom_dir(cfg) / "labels.u8"});
    const SimParts parts = build_sim_parts(cfg);
    const FanBeamGeometry& geom = cfg.geom;

    // enhancement-only line integrals (the reconstruction target)
    const SinogramStack ideal_enh = project_dynamic(parts.truth_dynamic, parts.schedule, geom);
    write_stack(sim_dir(cfg, "noiseless"), ideal_enh, parts.schedule);

    // baseline-anatomy projections over one full rotation, reused per scan
    ViewSet full_rotation;
    full_rotation.angles.resize(geom.views_per_rotation);
    for (int v = 0; v < geom.views_per_rotation; ++v)
        full_rotation.angles[v] = v * 2.0 * std::numbers::pi / geom.views_per_rotation;
    const Sinogram mu0_proj = forward_project(parts.phantom.mu0, cfg.grid, geom, full_rotation);
    const auto mu0_rays_at = [&](double angle) {
        const double step = 2.0 * std::numbers::pi / geom.views_per_rotation;
        const auto v = static_cast<std::size_t>(std::llround(angle / step));
        return mu0_proj.data.begin() + static_cast<std::ptrdiff_t>(v * geom.n_det);
    };

    // total attenuation (baseline + enhancement) for noise simulation
    SinogramStack total = ideal_enh;
    for (auto& frame : total.frames)
        for (std::size_t v = 0; v < frame.n_views(); ++v) {
            const auto mu0_row = mu0_rays_at(frame.angles[v]);
            for (int k = 0; k < geom.n_det; ++k) frame.at(v, k) += *(mu0_row + k);
        }

    std::vector<Sinogram> ideal_masks;
    for (const auto& views : parts.schedule.mask_views) {
        Sinogram mask(geom, views.angles);
        for (std::size_t v = 0; v < views.count(); ++v) {
            const auto mu0_row = mu0_rays_at(views.angles[v]);
            for (int k = 0; k < geom.n_det; ++k) mask.at(v, k) = *(mu0_row + k);
        }
        ideal_masks.push_back(std::move(mask));
    }

    nlohmann::json index;
    index["levels"] = nlohmann::json::array();
    index["levels"].push_back("noiseless");
    const std::uint64_t rays_per_rotation =
        static_cast<std::uint64_t>(geom.views_per_rotation) * geom.n_det;
    for (std::size_t lvl = 0; lvl < cfg.exposure_levels.size(); ++lvl) {
        const double i0 = cfg.exposure_levels[lvl];
        const std::string tag = ExperimentConfig::level_tag(i0);
        // distinct per-level streams, one counter-based stream per ray
        const std::uint64_t level_seed = cfg.seed * 1000003ULL + 17ULL * (lvl + 1);
        std::vector<Sinogram> noisy_masks;
        for (std::size_t m = 0; m < ideal_masks.size(); ++m)
            noisy_masks.push_back(
                apply_poisson_noise(ideal_masks[m], i0, level_seed, m * rays_per_rotation));
        SinogramStack noisy_total = apply_poisson_noise(total, i0, level_seed,
                                                        ideal_masks.size() * rays_per_rotation);
        noisy_total.weights = estimate_weights(noisy_total, i0);
        SinogramStack enh = subtract_mask(noisy_total, noisy_masks, cfg.grid);
        write_stack(sim_dir(cfg, tag), enh, parts.schedule);
        index["levels"].push_back(tag);
    }
    std::ofstream(cfg.out_dir / "sim" / "index.json") << index.dump(2) << "\n";
    refresh_manifest(cfg);
}

void cmd_reconstruct(const ExperimentConfig& cfg, const ReconstructOptions& options) {
    if (options.method != "trainer" && options.method != "fbp-tikh")
        throw std::invalid_argument("unknown method: " + options.method +
                                    " (expected trainer or fbp-tikh)");
    const ScanSchedule schedule = make_schedule(protocol_with_seed(cfg));
    const SinogramStack measured = read_stack(sim_dir(cfg, options.level), cfg, schedule);
    const TimeGrid tg = schedule.time_grid();
    const fs::path dir = level_dir(cfg, options.method, options.level);
    fs::create_directories(dir);

    std::ofstream log(dir / "run.log");
    log << "method " << options.method << "\nlevel " << options.level << "\nseed " << cfg.seed
        << "\n";

    if (options.method == "trainer") {
        TrainerProblem problem;
        problem.grid = cfg.grid;
        problem.geom = cfg.geom;
        problem.schedule = schedule;
        problem.ctx = make_convolution_context(cfg.perfusion, cfg.phantom.aif, tg);
        problem.measured = measured;
        problem.arch = cfg.arch;
        SolverConfig solver = cfg.solver;
        solver.seed = cfg.seed;
        solver.checkpoint_dir = dir;
        const TrainerResult result = run_trainer(problem, solver);
        write_map_outputs(dir, cfg.grid, result.u.cbf, &result.u.t0, result.cbv, result.mtt);
        write_loss_csv(dir / "loss.csv", result.initial, result.history);
        log << "outer_iterations " << result.completed_iterations << "\n";
        log << "initial_total " << format_double(result.initial.total) << "\n";
        if (!result.history.empty())
            log << "final_total " << format_double(result.history.back().total) << "\n";
        log << "rollbacks " << result.total_rollbacks << "\n";
    } else {
        const DynamicImage frames = baseline_frames(cfg, measured, schedule);
        if (options.keep_frames) {
            std::vector<double> flat;
            for (const auto& f : frames.frames) flat.insert(flat.end(), f.begin(), f.end());
            io::write_f32(dir / "frames.f32", flat);
            io::Meta meta;
            meta["frames"] = std::to_string(frames.frame_count());
            meta["nx"] = std::to_string(cfg.grid.nx);
            meta["ny"] = std::to_string(cfg.grid.ny);
            meta["units"] = "1/mm";
            io::write_meta(dir / "frames.f32", meta);
        }
        const TacSet tacs = tacs_from_frames(cfg, frames, schedule);
        const DeconvolutionResult maps = svd_tikhonov_deconvolve(
            tacs, schedule.seconds_per_rotation, cfg.baseline_threshold, cfg.perfusion.rho);
        write_map_outputs(dir, cfg.grid, maps.cbf, nullptr, maps.cbv, maps.mtt);
        log << "frames " << frames.frame_count() << "\n";
    }
    refresh_manifest(cfg);
}

void cmd_evaluate(const ExperimentConfig& cfg) {
    const PhantomInstance phantom = build_phantom(cfg.phantom, cfg.grid);
    const ScanSchedule schedule = make_schedule(protocol_with_seed(cfg));
    const TimeGrid tg = schedule.time_grid();

    std::vector<std::string> levels;
    for (double i0 : cfg.exposure_levels) levels.push_back(ExperimentConfig::level_tag(i0));
    const std::vector<std::string> methods = {"trainer", "fbp-tikh"};

    std::vector<fs::path> needed = {phantom_dir(cfg) / "cbf.f32"};
    for (const auto& method : methods)
        for (const auto& level : levels) needed.push_back(level_dir(cfg, method, level) / "cbf.f32");
    require_exists(needed);

    const fs::path eval_dir = cfg.out_dir / "eval";
    fs::create_directories(eval_dir);

    const auto rois = default_rois(phantom);
    const std::vector<double> tissue = phantom.tissue_mask();

    std::vector<std::vector<std::string>> overall_rows;
    std::vector<std::vector<std::string>> tissue_rows;
    std::vector<std::vector<std::string>> roi_rows;
    for (const auto& method : methods) {
        for (const auto& level : levels) {
            const fs::path dir = level_dir(cfg, method, level);
            const auto cbf = io::read_image(dir / "cbf.f32");
            const auto mtt = io::read_image(dir / "mtt.f32");
            const std::vector<std::pair<std::string, const std::vector<double>*>> maps = {
                {"CBF", &cbf}, {"MTT", &mtt}};
            const std::vector<std::pair<std::string, const std::vector<double>*>> truth = {
                {"CBF", &phantom.cbf}, {"MTT", &phantom.mtt}};
            for (std::size_t m = 0; m < maps.size(); ++m) {
                const auto& values = *maps[m].second;
                const auto& truth_values = *truth[m].second;
                const double tmax =
                    *std::max_element(truth_values.begin(), truth_values.end());
                overall_rows.push_back({maps[m].first, method, level,
                                        format_double(rrmse(values, truth_values)),
                                        format_double(psnr(values, truth_values, tmax)),
                                        format_double(tmax)});
                for (TissueLabel label :
                     {TissueLabel::healthy, TissueLabel::penumbra, TissueLabel::core}) {
                    const auto mask = phantom.label_mask(label);
                    tissue_rows.push_back({maps[m].first, method, level, to_string(label),
                                           format_double(rrmse(values, truth_values, &mask))});
                }
            }
            for (const auto& row : roi_report(maps, truth, rois)) {
                if (row.skipped) {
                    roi_rows.push_back({row.map_name, method, level, row.roi_name, "skipped", "",
                                        "", ""});
                    continue;
                }
                roi_rows.push_back({row.map_name, method, level, row.roi_name,
                                    format_double(row.rrmse_pct), format_double(row.mean),
                                    format_double(row.stddev), format_double(row.truth_mean)});
            }
        }
    }
    io::write_csv_rows(eval_dir / "overall_table.csv",
                       {"map", "method", "level", "rrmse_pct", "psnr_db", "psnr_max"},
                       overall_rows);
    io::write_csv_rows(eval_dir / "tissue_table.csv",
                       {"map", "method", "level", "tissue", "rrmse_pct"}, tissue_rows);
    io::write_csv_rows(eval_dir / "roi_table.csv",
                       {"map", "method", "level", "roi", "rrmse_pct", "mean", "std", "truth_mean"},
                       roi_rows);

    // one representative time-attenuation curve per tissue type, full exposure
    const std::string tac_level = levels.front();
    const DynamicImage truth_dyn = ground_truth_dynamic(phantom, cfg.phantom.aif, tg);
    const fs::path trainer_dir = level_dir(cfg, "trainer", tac_level);
    ParamImagePair u(cfg.grid);
    u.cbf = io::read_image(trainer_dir / "cbf.f32");
    u.t0 = io::read_image(trainer_dir / "t0.f32");
    const ConvolutionContext ctx = make_convolution_context(cfg.perfusion, cfg.phantom.aif, tg);
    const DynamicImage trainer_dyn = synthesize_dynamic(u, ctx, tg);
    const SinogramStack measured = read_stack(sim_dir(cfg, tac_level), cfg, schedule);
    const DynamicImage base_dyn = baseline_frames(cfg, measured, schedule);

    for (TissueLabel label : {TissueLabel::healthy, TissueLabel::penumbra, TissueLabel::core}) {
        const std::size_t pixel = pick_tissue_pixel(phantom, label);
        std::vector<std::vector<double>> rows;
        for (int j = 0; j < tg.frame_count; ++j)
            rows.push_back({tg.times[j], truth_dyn.frames[j][pixel], trainer_dyn.frames[j][pixel]});
        io::write_csv(eval_dir / ("tac_" + to_string(label) + ".csv"),
                      {"t_s", "truth", "trainer"}, rows);
        std::vector<std::vector<double>> base_rows;
        for (int s = 0; s < base_dyn.frame_count(); ++s)
            base_rows.push_back({(s + 0.5) * schedule.seconds_per_rotation,
                                 base_dyn.frames[s][pixel]});
        io::write_csv(eval_dir / ("tac_" + to_string(label) + "_fbp_tikh.csv"),
                      {"t_s", "fbp_tikh"}, base_rows);
    }
    refresh_manifest(cfg);
}

void cmd_all(const ExperimentConfig& cfg) {
    cmd_phantom(cfg);
    cmd_simulate(cfg);
    for (double i0 : cfg.exposure_levels) {
        const std::string tag = ExperimentConfig::level_tag(i0);
        cmd_reconstruct(cfg, {"trainer", tag, false});
        cmd_reconstruct(cfg, {"fbp-tikh", tag, false});
    }
    cmd_evaluate(cfg);
}

void refresh_manifest(const ExperimentConfig& cfg) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(cfg.out_dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().filename() == "manifest.json") continue;
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    nlohmann::json manifest;
    manifest["preset"] = cfg.preset_name;
    manifest["seed"] = cfg.seed;
    manifest["files"] = nlohmann::json::array();
    for (const auto& file : files) {
        nlohmann::json entry;
        entry["path"] = fs::relative(file, cfg.out_dir).generic_string();
        entry["bytes"] = fs::file_size(file);
        entry["fnv1a64"] = io::hash_file(file);
        manifest["files"].push_back(entry);
    }
    std::ofstream(cfg.out_dir / "manifest.json") << manifest.dump(2) << "\n";
}

}  // namespace perfrec
