#pragma once

#include <optional>
#include <string>
#include <vector>

#include "perfrec/core.hpp"
#include "perfrec/phantom.hpp"

namespace perfrec {

/// Relative root-mean-square error in percent of the ground-truth maximum,
/// over an optional mask (whole image when absent).
double rrmse(const std::vector<double>& y, const std::vector<double>& y_truth,
             const std::vector<double>* mask = nullptr);

/// 10*log10(MAX^2 / MSE), capped at 300 dB when MSE is zero.
double psnr(const std::vector<double>& y, const std::vector<double>& y_truth, double max_value,
            const std::vector<double>* mask = nullptr);

double mse(const std::vector<double>& y, const std::vector<double>& y_truth,
           const std::vector<double>* mask = nullptr);

struct RoiSpec {
    std::string name;
    std::vector<std::size_t> pixels;  // non-empty, indices within the grid
};

/// Ten deterministic disk ROIs placed on the phantom labels:
/// 4 healthy, 3 penumbra, 3 ischemic core, radius in pixels.
std::vector<RoiSpec> default_rois(const PhantomInstance& phantom, int radius_px = 3);

struct RoiRow {
    std::string map_name;
    std::string roi_name;
    double rrmse_pct = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
    double truth_mean = 0.0;
    bool skipped = false;
};

/// Per-ROI, per-map rRMSE and mean/std table. Empty ROIs produce a warning
/// row and are skipped.
std::vector<RoiRow> roi_report(const std::vector<std::pair<std::string, const std::vector<double>*>>& maps,
                               const std::vector<std::pair<std::string, const std::vector<double>*>>& truth,
                               const std::vector<RoiSpec>& rois);

}  // namespace perfrec
