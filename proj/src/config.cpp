#include "perfrec/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace perfrec {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return (b == std::string::npos) ? std::string{} : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<int> int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& item : split_list(s)) out.push_back(std::stoi(item));
    return out;
}

TissueLabel label_from_string(const std::string& s) {
    if (s == "background") return TissueLabel::background;
    if (s == "skull") return TissueLabel::skull;
    if (s == "healthy") return TissueLabel::healthy;
    if (s == "csf") return TissueLabel::csf;
    if (s == "penumbra") return TissueLabel::penumbra;
    if (s == "core") return TissueLabel::core;
    if (s == "artery") return TissueLabel::artery;
    throw std::invalid_argument("unknown tissue label: " + s);
}

/// Fetch helpers: apply the override only when the key is present.
struct SectionView {
    const ConfigFile::Section* section;
    void get(const std::string& key, double& into) const {
        if (section == nullptr) return;
        if (auto it = section->values.find(key); it != section->values.end()) into = std::stod(it->second);
    }
    void get(const std::string& key, int& into) const {
        if (section == nullptr) return;
        if (auto it = section->values.find(key); it != section->values.end()) into = std::stoi(it->second);
    }
    void get(const std::string& key, std::uint64_t& into) const {
        if (section == nullptr) return;
        if (auto it = section->values.find(key); it != section->values.end()) into = std::stoull(it->second);
    }
    void get(const std::string& key, bool& into) const {
        if (section == nullptr) return;
        if (auto it = section->values.find(key); it != section->values.end())
            into = (it->second == "1" || it->second == "true" || it->second == "on");
    }
    void get(const std::string& key, std::string& into) const {
        if (section == nullptr) return;
        if (auto it = section->values.find(key); it != section->values.end()) into = it->second;
    }
};

}  // namespace

ConfigFile ConfigFile::parse_text(const std::string& text) {
    ConfigFile file;
    std::stringstream ss(text);
    std::string line;
    Section* current = nullptr;
    while (std::getline(ss, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            file.sections.push_back({trim(line.substr(1, line.size() - 2)), {}});
            current = &file.sections.back();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value, got: " + line);
        if (current == nullptr) {
            file.sections.push_back({"", {}});
            current = &file.sections.back();
        }
        current->values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return file;
}

ConfigFile ConfigFile::parse(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

const ConfigFile::Section* ConfigFile::find(const std::string& name) const {
    for (const auto& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

std::vector<const ConfigFile::Section*> ConfigFile::find_all(const std::string& name) const {
    std::vector<const Section*> out;
    for (const auto& s : sections)
        if (s.name == name) out.push_back(&s);
    return out;
}

ConvolutionContext make_convolution_context(const PerfusionSettings& settings,
                                            const AifModel& aif, const TimeGrid& tg) {
    ConvolutionContext ctx;
    ctx.aif_matrix = build_aif_matrix(sample_aif(aif, tg.times));
    ctx.dt = tg.dt;
    ctx.rho = settings.rho;
    ctx.decay_seconds = settings.decay_seconds;
    ctx.decay_mode = settings.decay_mode;
    ctx.partition_coeff = settings.partition_coeff;
    return ctx;
}

std::string ExperimentConfig::level_tag(double i0) {
    const int exponent = static_cast<int>(std::floor(std::log10(i0) + 1e-9));
    const double mantissa = i0 / std::pow(10.0, exponent);
    std::ostringstream os;
    if (std::abs(mantissa - std::round(mantissa)) < 1e-9)
        os << static_cast<int>(std::round(mantissa));
    else
        os << mantissa;
    os << "e" << exponent;
    return os.str();
}

ExperimentConfig desk_experiment_config() {
    ExperimentConfig cfg;
    cfg.preset_name = "desk";
    cfg.grid = ImageGrid(64, 64, 1.0, 1.0);
    cfg.geom.source_to_iso = 750.0;
    cfg.geom.source_to_detector = 1200.0;
    cfg.geom.n_det = 128;
    cfg.geom.det_pitch = 1.25;
    cfg.geom.views_per_rotation = 100;
    cfg.protocol.scans = 8;
    cfg.protocol.subsets_per_scan = 4;
    cfg.protocol.views_per_rotation = 100;
    cfg.protocol.seconds_per_rotation = 8.0;
    cfg.protocol.mask_scans = 2;
    cfg.phantom = desk_phantom_config();
    cfg.arch = NetworkArch{};
    cfg.solver = SolverConfig{};
    cfg.solver.num_admm = 60;
    cfg.solver.q_inner = 200;
    cfg.solver.p_inner = 20;
    return cfg;
}

ExperimentConfig full_experiment_config() {
    ExperimentConfig cfg = desk_experiment_config();
    cfg.preset_name = "full";
    cfg.grid = ImageGrid(256, 256, 1.0, 1.0);
    cfg.geom.n_det = 380;
    cfg.geom.det_pitch = 1.6;  // covers the 256 mm grid's circumscribed circle
    cfg.geom.views_per_rotation = 200;
    cfg.protocol.views_per_rotation = 200;
    cfg.phantom = full_phantom_config();
    cfg.solver.num_admm = 700;
    cfg.solver.q_inner = 2000;
    cfg.solver.p_inner = 50;
    cfg.solver.cache_sparse = false;  // per-frame sparse rows would need several GB
    return cfg;
}

ExperimentConfig experiment_from_preset(const std::string& preset) {
    if (preset == "desk") return desk_experiment_config();
    if (preset == "full") return full_experiment_config();
    throw std::invalid_argument("unknown preset: " + preset);
}

void apply_overrides(ExperimentConfig& cfg, const ConfigFile& file) {
    SectionView grid{file.find("grid")};
    int nx = cfg.grid.nx, ny = cfg.grid.ny;
    double dx = cfg.grid.dx, dy = cfg.grid.dy;
    grid.get("nx", nx);
    grid.get("ny", ny);
    grid.get("dx", dx);
    grid.get("dy", dy);
    cfg.grid = ImageGrid(nx, ny, dx, dy);

    SectionView geom{file.find("geometry")};
    geom.get("source_to_iso", cfg.geom.source_to_iso);
    geom.get("source_to_detector", cfg.geom.source_to_detector);
    geom.get("detector_bins", cfg.geom.n_det);
    geom.get("detector_pitch", cfg.geom.det_pitch);

    SectionView sched{file.find("schedule")};
    sched.get("scans", cfg.protocol.scans);
    sched.get("subsets_per_scan", cfg.protocol.subsets_per_scan);
    sched.get("views_per_rotation", cfg.protocol.views_per_rotation);
    sched.get("seconds_per_rotation", cfg.protocol.seconds_per_rotation);
    sched.get("mask_scans", cfg.protocol.mask_scans);
    sched.get("entrance_photons", cfg.protocol.entrance_photons);
    sched.get("seed", cfg.protocol.seed);
    cfg.geom.views_per_rotation = cfg.protocol.views_per_rotation;

    SectionView aif{file.find("aif")};
    aif.get("arrival", cfg.phantom.aif.arrival_s);
    aif.get("shape", cfg.phantom.aif.shape);
    aif.get("scale", cfg.phantom.aif.scale_s);
    aif.get("peak", cfg.phantom.aif.peak);

    SectionView perf{file.find("perfusion")};
    perf.get("rho", cfg.perfusion.rho);
    perf.get("decay_seconds", cfg.perfusion.decay_seconds);
    perf.get("partition_coeff", cfg.perfusion.partition_coeff);
    std::string mode;
    perf.get("residue_decay", mode);
    if (mode == "partition") cfg.perfusion.decay_mode = ResidueDecayMode::partition;
    else if (mode == "constant_h" || mode.empty()) {} else
        throw std::invalid_argument("unknown residue_decay mode: " + mode);
    cfg.phantom.rho = cfg.perfusion.rho;
    cfg.phantom.decay_seconds = cfg.perfusion.decay_seconds;

    SectionView gen{file.find("generator")};
    gen.get("depth", cfg.arch.depth);
    if (const auto* s = file.find("generator")) {
        if (auto it = s->values.find("n_down"); it != s->values.end()) cfg.arch.n_down = int_list(it->second);
        if (auto it = s->values.find("n_up"); it != s->values.end()) cfg.arch.n_up = int_list(it->second);
        if (auto it = s->values.find("n_skip"); it != s->values.end()) cfg.arch.n_skip = int_list(it->second);
    }
    gen.get("k_down", cfg.arch.k_down);
    gen.get("k_up", cfg.arch.k_up);
    gen.get("k_skip", cfg.arch.k_skip);
    gen.get("leaky_slope", cfg.arch.leaky_slope);
    gen.get("cbf_max", cfg.arch.cbf_max);
    gen.get("t0_max", cfg.arch.t0_max);
    std::string init;
    gen.get("init", init);
    if (init == "uniform") cfg.arch.init = WeightInit::uniform_fan_in;
    else if (init == "centered" || init.empty()) {} else
        throw std::invalid_argument("unknown generator init: " + init);

    SectionView solver{file.find("solver")};
    solver.get("lambda", cfg.solver.lambda);
    solver.get("eta", cfg.solver.eta);
    solver.get("alpha", cfg.solver.alpha);
    solver.get("epsilon", cfg.solver.epsilon);
    solver.get("num_admm", cfg.solver.num_admm);
    solver.get("q_inner", cfg.solver.q_inner);
    solver.get("p_inner", cfg.solver.p_inner);
    solver.get("rollback_factor", cfg.solver.rollback_factor);
    solver.get("sigma_perturb", cfg.solver.sigma_perturb);
    solver.get("cbf_init", cfg.solver.cbf_init);
    solver.get("t0_init", cfg.solver.t0_init);
    solver.get("cache_sparse", cfg.solver.cache_sparse);
    solver.get("checkpoint_every", cfg.solver.checkpoint_every);

    SectionView base{file.find("baseline")};
    base.get("threshold", cfg.baseline_threshold);

    SectionView exp{file.find("experiment")};
    exp.get("seed", cfg.seed);
    std::string out;
    exp.get("out", out);
    if (!out.empty()) cfg.out_dir = out;
    if (const auto* s = file.find("experiment")) {
        if (auto it = s->values.find("levels"); it != s->values.end()) {
            cfg.exposure_levels.clear();
            for (const auto& item : split_list(it->second)) cfg.exposure_levels.push_back(std::stod(item));
        }
    }

    const auto regions = file.find_all("region");
    if (!regions.empty()) {
        cfg.phantom.regions.clear();
        for (const auto* s : regions) {
            TissueRegion r;
            SectionView view{s};
            std::string label;
            view.get("label", label);
            r.label = label_from_string(label);
            view.get("center_x", r.center_x);
            view.get("center_y", r.center_y);
            view.get("semi_x", r.semi_x);
            view.get("semi_y", r.semi_y);
            double rotation_deg = 0.0;
            view.get("rotation_deg", rotation_deg);
            r.rotation = rotation_deg * std::acos(-1.0) / 180.0;
            view.get("cbf", r.cbf_true);
            view.get("t0", r.t0_true);
            view.get("mu0", r.mu0);
            cfg.phantom.regions.push_back(r);
        }
    }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, const std::string& preset) {
    ExperimentConfig cfg = experiment_from_preset(preset);
    apply_overrides(cfg, ConfigFile::parse(path));
    return cfg;
}

void write_experiment_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "# experiment configuration (preset: " << cfg.preset_name << ")\n";
    out << "[grid]\nnx = " << cfg.grid.nx << "\nny = " << cfg.grid.ny << "\ndx = " << cfg.grid.dx
        << "\ndy = " << cfg.grid.dy << "\n\n";
    out << "[geometry]\nsource_to_iso = " << cfg.geom.source_to_iso
        << "\nsource_to_detector = " << cfg.geom.source_to_detector
        << "\ndetector_bins = " << cfg.geom.n_det << "\ndetector_pitch = " << cfg.geom.det_pitch
        << "\n\n";
    out << "[schedule]\nscans = " << cfg.protocol.scans
        << "\nsubsets_per_scan = " << cfg.protocol.subsets_per_scan
        << "\nviews_per_rotation = " << cfg.protocol.views_per_rotation
        << "\nseconds_per_rotation = " << cfg.protocol.seconds_per_rotation
        << "\nmask_scans = " << cfg.protocol.mask_scans
        << "\nentrance_photons = " << cfg.protocol.entrance_photons
        << "\nseed = " << cfg.protocol.seed << "\n\n";
    out << "[aif]\narrival = " << cfg.phantom.aif.arrival_s << "\nshape = " << cfg.phantom.aif.shape
        << "\nscale = " << cfg.phantom.aif.scale_s << "\npeak = " << cfg.phantom.aif.peak << "\n\n";
    out << "[perfusion]\nrho = " << cfg.perfusion.rho
        << "\ndecay_seconds = " << cfg.perfusion.decay_seconds << "\nresidue_decay = "
        << (cfg.perfusion.decay_mode == ResidueDecayMode::partition ? "partition" : "constant_h")
        << "\npartition_coeff = " << cfg.perfusion.partition_coeff << "\n\n";
    out << "[generator]\ndepth = " << cfg.arch.depth << "\nn_down = ";
    for (std::size_t i = 0; i < cfg.arch.n_down.size(); ++i)
        out << cfg.arch.n_down[i] << (i + 1 < cfg.arch.n_down.size() ? "," : "");
    out << "\nn_up = ";
    for (std::size_t i = 0; i < cfg.arch.n_up.size(); ++i)
        out << cfg.arch.n_up[i] << (i + 1 < cfg.arch.n_up.size() ? "," : "");
    out << "\nn_skip = ";
    for (std::size_t i = 0; i < cfg.arch.n_skip.size(); ++i)
        out << cfg.arch.n_skip[i] << (i + 1 < cfg.arch.n_skip.size() ? "," : "");
    out << "\nk_down = " << cfg.arch.k_down << "\nk_up = " << cfg.arch.k_up
        << "\nk_skip = " << cfg.arch.k_skip << "\nleaky_slope = " << cfg.arch.leaky_slope
        << "\ncbf_max = " << cfg.arch.cbf_max << "\nt0_max = " << cfg.arch.t0_max << "\ninit = "
        << (cfg.arch.init == WeightInit::uniform_fan_in ? "uniform" : "centered") << "\n\n";
    out << "[solver]\nlambda = " << cfg.solver.lambda << "\neta = " << cfg.solver.eta
        << "\nalpha = " << cfg.solver.alpha << "\nepsilon = " << cfg.solver.epsilon
        << "\nnum_admm = " << cfg.solver.num_admm << "\nq_inner = " << cfg.solver.q_inner
        << "\np_inner = " << cfg.solver.p_inner
        << "\nrollback_factor = " << cfg.solver.rollback_factor
        << "\nsigma_perturb = " << cfg.solver.sigma_perturb
        << "\ncbf_init = " << cfg.solver.cbf_init << "\nt0_init = " << cfg.solver.t0_init
        << "\ncache_sparse = " << (cfg.solver.cache_sparse ? 1 : 0)
        << "\ncheckpoint_every = " << cfg.solver.checkpoint_every << "\n\n";
    out << "[baseline]\nthreshold = " << cfg.baseline_threshold << "\n\n";
    out << "[experiment]\nlevels = ";
    for (std::size_t i = 0; i < cfg.exposure_levels.size(); ++i)
        out << cfg.exposure_levels[i] << (i + 1 < cfg.exposure_levels.size() ? "," : "");
    out << "\nseed = " << cfg.seed << "\n";
    out << "\n";
    for (const auto& r : cfg.phantom.regions) {
        out << "[region]\nlabel = " << to_string(r.label) << "\ncenter_x = " << r.center_x
            << "\ncenter_y = " << r.center_y << "\nsemi_x = " << r.semi_x
            << "\nsemi_y = " << r.semi_y << "\nrotation_deg = " << r.rotation * 180.0 / std::acos(-1.0)
            << "\ncbf = " << r.cbf_true << "\nt0 = " << r.t0_true << "\nmu0 = " << r.mu0 << "\n\n";
    }
}

}  // namespace perfrec
