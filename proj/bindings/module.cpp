#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "perfrec/acquisition.hpp"
#include "perfrec/baseline.hpp"
#include "perfrec/config.hpp"
#include "perfrec/harness.hpp"
#include "perfrec/metrics.hpp"
#include "perfrec/phantom.hpp"
#include "perfrec/projector.hpp"
#include "perfrec/solver.hpp"

namespace py = pybind11;
using namespace perfrec;

namespace {

py::array_t<double> to_array(const std::vector<double>& v, const ImageGrid& grid) {
    py::array_t<double> out({grid.ny, grid.nx});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<double> from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return {a.data(), a.data() + a.size()};
}

ViewSet uniform_views(int n_views) {
    ViewSet views;
    views.angles.resize(n_views);
    for (int v = 0; v < n_views; ++v)
        views.angles[v] = v * 2.0 * std::acos(-1.0) / n_views;
    return views;
}

}  // namespace

PYBIND11_MODULE(_perfrec, m) {
    m.doc() = "quantitative perfusion reconstruction from fan-beam sinogram data";

    py::class_<ImageGrid>(m, "ImageGrid")
        .def(py::init<int, int, double, double, double, double>(), py::arg("nx"), py::arg("ny"),
             py::arg("dx") = 1.0, py::arg("dy") = 1.0, py::arg("origin_x") = 0.0,
             py::arg("origin_y") = 0.0)
        .def_readonly("nx", &ImageGrid::nx)
        .def_readonly("ny", &ImageGrid::ny)
        .def_readonly("dx", &ImageGrid::dx)
        .def_readonly("dy", &ImageGrid::dy);

    py::class_<FanBeamGeometry>(m, "FanBeamGeometry")
        .def(py::init<>())
        .def_readwrite("source_to_iso", &FanBeamGeometry::source_to_iso)
        .def_readwrite("source_to_detector", &FanBeamGeometry::source_to_detector)
        .def_readwrite("n_det", &FanBeamGeometry::n_det)
        .def_readwrite("det_pitch", &FanBeamGeometry::det_pitch)
        .def_readwrite("views_per_rotation", &FanBeamGeometry::views_per_rotation)
        .def("fov_radius", &FanBeamGeometry::fov_radius);

    py::class_<AifModel>(m, "AifModel")
        .def(py::init<>())
        .def_readwrite("arrival_s", &AifModel::arrival_s)
        .def_readwrite("shape", &AifModel::shape)
        .def_readwrite("scale_s", &AifModel::scale_s)
        .def_readwrite("peak", &AifModel::peak);

    m.def("sample_aif", [](const AifModel& aif, double t) { return sample_aif(aif, t); });

    m.def("desk_phantom", [](const ImageGrid& grid) {
        const PhantomInstance phantom = build_phantom(desk_phantom_config(), grid);
        py::dict out;
        py::array_t<std::uint8_t> labels({grid.ny, grid.nx});
        for (std::size_t i = 0; i < phantom.labels.size(); ++i)
            labels.mutable_data()[i] = static_cast<std::uint8_t>(phantom.labels[i]);
        out["labels"] = labels;
        out["cbf"] = to_array(phantom.cbf, grid);
        out["t0"] = to_array(phantom.t0, grid);
        out["cbv"] = to_array(phantom.cbv, grid);
        out["mtt"] = to_array(phantom.mtt, grid);
        out["mu0"] = to_array(phantom.mu0, grid);
        return out;
    });

    m.def(
        "forward_project",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
           const ImageGrid& grid, const FanBeamGeometry& geom, int n_views) {
            const Sinogram sino = forward_project(from_array(image), grid, geom,
                                                  uniform_views(n_views));
            py::array_t<double> out({static_cast<int>(sino.n_views()), geom.n_det});
            std::copy(sino.data.begin(), sino.data.end(), out.mutable_data());
            return out;
        },
        py::arg("image"), py::arg("grid"), py::arg("geom"), py::arg("n_views"));

    m.def(
        "back_project",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& sino_data,
           const ImageGrid& grid, const FanBeamGeometry& geom, int n_views) {
            Sinogram sino(geom, uniform_views(n_views).angles);
            sino.data = from_array(sino_data);
            return to_array(back_project(sino, grid), grid);
        },
        py::arg("sinogram"), py::arg("grid"), py::arg("geom"), py::arg("n_views"));

    m.def(
        "fbp_reconstruct",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& sino_data,
           const ImageGrid& grid, const FanBeamGeometry& geom, int n_views) {
            Sinogram sino(geom, uniform_views(n_views).angles);
            sino.data = from_array(sino_data);
            return to_array(fbp_reconstruct(sino, grid), grid);
        },
        py::arg("sinogram"), py::arg("grid"), py::arg("geom"), py::arg("n_views"));

    m.def(
        "synthesize_dynamic",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cbf,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& t0,
           const ImageGrid& grid, const AifModel& aif, int frames, double dt, double t_first) {
            ParamImagePair u(grid);
            u.cbf = from_array(cbf);
            u.t0 = from_array(t0);
            const TimeGrid tg(frames, dt, t_first);
            PerfusionSettings settings;
            const ConvolutionContext ctx = make_convolution_context(settings, aif, tg);
            const DynamicImage x = synthesize_dynamic(u, ctx, tg);
            py::array_t<double> out({frames, grid.ny, grid.nx});
            double* dst = out.mutable_data();
            for (int j = 0; j < frames; ++j)
                dst = std::copy(x.frames[j].begin(), x.frames[j].end(), dst);
            return out;
        },
        py::arg("cbf"), py::arg("t0"), py::arg("grid"), py::arg("aif"), py::arg("frames"),
        py::arg("dt"), py::arg("t_first"));

    m.def("rrmse", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& y,
                      const py::array_t<double, py::array::c_style | py::array::forcecast>& t) {
        return rrmse(from_array(y), from_array(t));
    });
    m.def("psnr", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& y,
                     const py::array_t<double, py::array::c_style | py::array::forcecast>& t,
                     double max_value) { return psnr(from_array(y), from_array(t), max_value); });

    m.def(
        "run_study",
        [](const std::string& preset, std::uint64_t seed, const std::string& out_dir,
           const std::string& command) {
            ExperimentConfig cfg = experiment_from_preset(preset);
            cfg.seed = seed;
            cfg.solver.seed = seed;
            cfg.out_dir = out_dir;
            if (command == "phantom") cmd_phantom(cfg);
            else if (command == "simulate") cmd_simulate(cfg);
            else if (command == "evaluate") cmd_evaluate(cfg);
            else if (command == "all") cmd_all(cfg);
            else throw std::invalid_argument("unknown command: " + command);
        },
        py::arg("preset"), py::arg("seed"), py::arg("out_dir"), py::arg("command"));

    m.def(
        "run_trainer_small",
        [](const ImageGrid& grid, const FanBeamGeometry& geom, int scans, int subsets,
           int num_admm, int q_inner, int p_inner, std::uint64_t seed) {
            ProtocolConfig protocol;
            protocol.scans = scans;
            protocol.subsets_per_scan = subsets;
            protocol.views_per_rotation = geom.views_per_rotation;
            protocol.mask_scans = 0;
            const ScanSchedule schedule = make_schedule(protocol);
            PhantomConfig phantom_cfg = desk_phantom_config();
            const double scale = grid.nx * grid.dx / 64.0;  // desk head spans a 64 mm field
            for (auto& r : phantom_cfg.regions) {
                r.center_x *= scale;
                r.center_y *= scale;
                r.semi_x *= scale;
                r.semi_y *= scale;
            }
            const PhantomInstance phantom = build_phantom(phantom_cfg, grid);
            const TimeGrid tg = schedule.time_grid();
            const DynamicImage truth = ground_truth_dynamic(phantom, phantom.config.aif, tg);

            TrainerProblem problem;
            problem.grid = grid;
            problem.geom = geom;
            problem.schedule = schedule;
            PerfusionSettings settings;
            problem.ctx = make_convolution_context(settings, phantom_cfg.aif, tg);
            problem.measured = project_dynamic(truth, schedule, geom);
            problem.arch = NetworkArch{};
            problem.arch.depth = 3;
            problem.arch.n_down = {8, 16, 16};
            problem.arch.n_up = {8, 16, 16};
            problem.arch.n_skip = {4, 4, 4};

            SolverConfig cfg;
            cfg.num_admm = num_admm;
            cfg.q_inner = q_inner;
            cfg.p_inner = p_inner;
            cfg.seed = seed;
            const TrainerResult result = run_trainer(problem, cfg);
            py::dict out;
            out["cbf"] = to_array(result.u.cbf, grid);
            out["t0"] = to_array(result.u.t0, grid);
            out["cbv"] = to_array(result.cbv, grid);
            out["mtt"] = to_array(result.mtt, grid);
            out["iterations"] = result.completed_iterations;
            out["initial_total"] = result.initial.total;
            out["final_total"] = result.history.empty() ? result.initial.total
                                                        : result.history.back().total;
            out["truth_cbf"] = to_array(phantom.cbf, grid);
            out["truth_mtt"] = to_array(phantom.mtt, grid);
            return out;
        },
        py::arg("grid"), py::arg("geom"), py::arg("scans"), py::arg("subsets"),
        py::arg("num_admm"), py::arg("q_inner"), py::arg("p_inner"), py::arg("seed"));
}
