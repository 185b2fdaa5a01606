#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "perfrec/acquisition.hpp"
#include "perfrec/core.hpp"
#include "perfrec/generator.hpp"
#include "perfrec/geometry.hpp"
#include "perfrec/phantom.hpp"
#include "perfrec/solver.hpp"

namespace perfrec {

/// Sectioned key-value text: `[section]` headers, `key = value` lines,
/// `#` comments. Repeated `[region]` sections accumulate in order.
struct ConfigFile {
    struct Section {
        std::string name;
        std::map<std::string, std::string> values;
    };
    std::vector<Section> sections;

    static ConfigFile parse(const std::filesystem::path& path);
    static ConfigFile parse_text(const std::string& text);

    const Section* find(const std::string& name) const;  // first match or null
    std::vector<const Section*> find_all(const std::string& name) const;
};

struct PerfusionSettings {
    double rho = 1.04;
    double decay_seconds = 4.0;
    ResidueDecayMode decay_mode = ResidueDecayMode::constant_h;
    double partition_coeff = 0.9;  // mL/g, used by the partition decay mode
};

/// ConvolutionContext for a schedule's frame grid and an AIF model.
ConvolutionContext make_convolution_context(const PerfusionSettings& settings,
                                            const AifModel& aif, const TimeGrid& tg);

/// One file drives the whole study.
struct ExperimentConfig {
    std::string preset_name = "desk";
    ImageGrid grid;
    FanBeamGeometry geom;
    ProtocolConfig protocol;
    PhantomConfig phantom;
    PerfusionSettings perfusion;
    NetworkArch arch;
    SolverConfig solver;
    double baseline_threshold = 0.15;       // fraction of the max singular value
    std::vector<double> exposure_levels = {1e6, 1e5, 5e4, 1e4};
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";

    /// Stable directory/file tag for an exposure level ("1e6", "5e4", ...).
    static std::string level_tag(double i0);
};

ExperimentConfig desk_experiment_config();
ExperimentConfig full_experiment_config();
ExperimentConfig experiment_from_preset(const std::string& preset);

/// Builds from a preset then applies overrides from a config file.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::string& preset = "desk");
void apply_overrides(ExperimentConfig& cfg, const ConfigFile& file);

void write_experiment_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

}  // namespace perfrec
