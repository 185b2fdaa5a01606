#include "perfrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace perfrec {

namespace {

constexpr double kPsnrCap = 300.0;  // dB sentinel for a perfect match

double masked_mse(const std::vector<double>& y, const std::vector<double>& y_truth,
                  const std::vector<double>* mask, double* truth_max) {
    if (y.size() != y_truth.size()) throw std::invalid_argument("metric: shape mismatch");
    if (mask && mask->size() != y.size()) throw std::invalid_argument("metric: mask shape mismatch");
    double sum = 0.0;
    double tmax = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (mask && (*mask)[i] == 0.0) continue;
        const double d = y[i] - y_truth[i];
        sum += d * d;
        tmax = std::max(tmax, y_truth[i]);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("metric: empty mask");
    if (truth_max) *truth_max = tmax;
    return sum / static_cast<double>(count);
}

}  // namespace

double mse(const std::vector<double>& y, const std::vector<double>& y_truth,
           const std::vector<double>* mask) {
    return masked_mse(y, y_truth, mask, nullptr);
}

double rrmse(const std::vector<double>& y, const std::vector<double>& y_truth,
             const std::vector<double>* mask) {
    double truth_max = 0.0;
    const double m = masked_mse(y, y_truth, mask, &truth_max);
    if (!(truth_max > 0.0)) throw std::invalid_argument("rrmse: ground-truth maximum is not positive");
    return 100.0 * std::sqrt(m) / truth_max;
}

double psnr(const std::vector<double>& y, const std::vector<double>& y_truth, double max_value,
            const std::vector<double>* mask) {
    const double m = masked_mse(y, y_truth, mask, nullptr);
    if (m == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / m));
}

std::vector<RoiSpec> default_rois(const PhantomInstance& phantom, int radius_px) {
    const ImageGrid& grid = phantom.grid;
    const auto disk_fits = [&](int cx, int cy, TissueLabel label) {
        for (int dy = -radius_px; dy <= radius_px; ++dy)
            for (int dx = -radius_px; dx <= radius_px; ++dx) {
                if (dx * dx + dy * dy > radius_px * radius_px) continue;
                const int x = cx + dx, y = cy + dy;
                if (x < 0 || x >= grid.nx || y < 0 || y >= grid.ny) return false;
                if (phantom.labels[static_cast<std::size_t>(y) * grid.nx + x] != label) return false;
            }
        return true;
    };
    const auto disk_pixels = [&](int cx, int cy) {
        std::vector<std::size_t> px;
        for (int dy = -radius_px; dy <= radius_px; ++dy)
            for (int dx = -radius_px; dx <= radius_px; ++dx)
                if (dx * dx + dy * dy <= radius_px * radius_px)
                    px.push_back(static_cast<std::size_t>(cy + dy) * grid.nx + (cx + dx));
        return px;
    };

    std::vector<RoiSpec> rois;
    const std::vector<std::pair<TissueLabel, int>> wanted = {
        {TissueLabel::healthy, 4}, {TissueLabel::penumbra, 3}, {TissueLabel::core, 3}};
    for (const auto& [label, count] : wanted) {
        std::vector<std::pair<int, int>> centres;
        // widest spacing that still yields the requested count; relax for
        // regions too small to hold well-separated disks
        for (int min_spacing = 2 * radius_px; min_spacing >= 1; --min_spacing) {
            centres.clear();
            for (int iy = radius_px; iy < grid.ny - radius_px && static_cast<int>(centres.size()) < count; ++iy) {
                for (int ix = radius_px; ix < grid.nx - radius_px; ++ix) {
                    if (!disk_fits(ix, iy, label)) continue;
                    bool far_enough = true;
                    for (const auto& [px, py] : centres)
                        if (std::abs(px - ix) < min_spacing && std::abs(py - iy) < min_spacing) {
                            far_enough = false;
                            break;
                        }
                    if (!far_enough) continue;
                    centres.emplace_back(ix, iy);
                    if (static_cast<int>(centres.size()) >= count) break;
                }
            }
            if (static_cast<int>(centres.size()) >= count) break;
        }
        for (std::size_t c = 0; c < centres.size(); ++c) {
            RoiSpec roi;
            roi.name = to_string(label) + "_" + std::to_string(c + 1);
            roi.pixels = disk_pixels(centres[c].first, centres[c].second);
            rois.push_back(std::move(roi));
        }
    }
    return rois;
}

std::vector<RoiRow> roi_report(const std::vector<std::pair<std::string, const std::vector<double>*>>& maps,
                               const std::vector<std::pair<std::string, const std::vector<double>*>>& truth,
                               const std::vector<RoiSpec>& rois) {
    if (maps.size() != truth.size())
        throw std::invalid_argument("roi_report: maps and truth lists differ in length");
    std::vector<RoiRow> rows;
    for (std::size_t m = 0; m < maps.size(); ++m) {
        const auto& [name, values] = maps[m];
        const auto& truth_values = *truth[m].second;
        for (const auto& roi : rois) {
            RoiRow row;
            row.map_name = name;
            row.roi_name = roi.name;
            if (roi.pixels.empty()) {
                row.skipped = true;
                rows.push_back(row);
                continue;
            }
            double sum = 0.0, sum2 = 0.0, tsum = 0.0, tmax = 0.0, err2 = 0.0;
            for (std::size_t idx : roi.pixels) {
                const double v = (*values)[idx];
                const double t = truth_values[idx];
                sum += v;
                sum2 += v * v;
                tsum += t;
                tmax = std::max(tmax, t);
                err2 += (v - t) * (v - t);
            }
            const double count = static_cast<double>(roi.pixels.size());
            row.mean = sum / count;
            row.stddev = std::sqrt(std::max(0.0, sum2 / count - row.mean * row.mean));
            row.truth_mean = tsum / count;
            row.rrmse_pct = tmax > 0.0 ? 100.0 * std::sqrt(err2 / count) / tmax : 0.0;
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace perfrec
