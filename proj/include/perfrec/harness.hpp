#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "perfrec/config.hpp"

namespace perfrec {

/// Experiment orchestration: phantom -> simulate -> reconstruct -> evaluate.
/// Each command reads its inputs from cfg.out_dir and refreshes the manifest.

void cmd_phantom(const ExperimentConfig& cfg);

/// Writes the noiseless enhancement stack plus one noisy, mask-subtracted
/// stack (with weights) per exposure level, and a manifest index.
void cmd_simulate(const ExperimentConfig& cfg);

struct ReconstructOptions {
    std::string method;  // "trainer" or "fbp-tikh"
    std::string level;   // level tag or "noiseless"
    bool keep_frames = false;
};

void cmd_reconstruct(const ExperimentConfig& cfg, const ReconstructOptions& options);

void cmd_evaluate(const ExperimentConfig& cfg);

/// phantom + simulate + reconstruct (both methods, every exposure level) +
/// evaluate.
void cmd_all(const ExperimentConfig& cfg);

/// Rebuilds <out>/manifest.json: one entry (path, bytes, fnv1a64) per output
/// file, sorted by path.
void refresh_manifest(const ExperimentConfig& cfg);

std::filesystem::path level_dir(const ExperimentConfig& cfg, const std::string& method,
                                const std::string& level);

}  // namespace perfrec
