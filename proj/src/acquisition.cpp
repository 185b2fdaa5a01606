#include "perfrec/acquisition.hpp"

#include "perfrec/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace perfrec {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (salt + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2));
    x ^= x >> 30; x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27; x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

/// Angle-grid key for exact matching of rotation angles across scans.
long long angle_key(double angle, int views_per_rotation) {
    const double step = kTwoPi / views_per_rotation;
    return std::llround(angle / step);
}

}  // namespace

TimeGrid ScanSchedule::time_grid() const { return TimeGrid::from_times(frame_times); }

void ScanSchedule::validate() const {
    if (frame_count() != scans * subsets_per_scan)
        throw std::invalid_argument("ScanSchedule: T != K*S");
    if (frame_views.size() != frame_times.size())
        throw std::invalid_argument("ScanSchedule: frame arrays disagree");
    for (std::size_t j = 0; j + 1 < frame_times.size(); ++j)
        if (!(frame_times[j] < frame_times[j + 1]))
            throw std::invalid_argument("ScanSchedule: frame times must increase");
    for (const auto& views : frame_views) views.validate();
    // each scan's subsets partition the rotation
    for (int s = 0; s < scans; ++s) {
        std::vector<double> all;
        for (int k = 0; k < subsets_per_scan; ++k) {
            const auto& v = frame_views[static_cast<std::size_t>(s) * subsets_per_scan + k];
            all.insert(all.end(), v.angles.begin(), v.angles.end());
        }
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i + 1 < all.size(); ++i)
            if (std::abs(all[i] - all[i + 1]) < 1e-12)
                throw std::invalid_argument("ScanSchedule: duplicated view within a scan");
    }
}

ScanSchedule make_schedule(const ProtocolConfig& protocol) {
    if (protocol.scans < 1 || protocol.views_per_rotation < 1 || protocol.subsets_per_scan < 1)
        throw std::invalid_argument("make_schedule: counts must be positive");
    if (!(protocol.seconds_per_rotation > 0.0))
        throw std::invalid_argument("make_schedule: seconds_per_rotation must be positive");
    if (protocol.views_per_rotation % protocol.subsets_per_scan != 0)
        throw std::invalid_argument("make_schedule: views_per_rotation must be divisible by subsets_per_scan");

    const int n = protocol.views_per_rotation;
    const int k_sub = protocol.subsets_per_scan;
    const int per_frame = n / k_sub;
    const double step = kTwoPi / n;
    const double view_dt = protocol.seconds_per_rotation / n;

    ScanSchedule schedule;
    schedule.scans = protocol.scans;
    schedule.subsets_per_scan = k_sub;
    schedule.seconds_per_rotation = protocol.seconds_per_rotation;

    // mask scans run back-to-back before the contrast injection at t = 0;
    // rotation direction alternates across the whole scan sequence
    for (int m = 0; m < protocol.mask_scans; ++m) {
        ViewSet views;
        views.reverse = (m % 2) == 1;
        views.angles.resize(n);
        for (int v = 0; v < n; ++v)
            views.angles[v] = (views.reverse ? (n - 1 - v) : v) * step;
        schedule.mask_views.push_back(std::move(views));
        schedule.mask_start_times.push_back((m - protocol.mask_scans) * protocol.seconds_per_rotation);
    }

    for (int s = 0; s < protocol.scans; ++s) {
        const bool reverse = ((protocol.mask_scans + s) % 2) == 1;
        const double start = s * protocol.seconds_per_rotation;
        for (int k = 0; k < k_sub; ++k) {
            ViewSet views;
            views.reverse = reverse;
            views.angles.resize(per_frame);
            for (int v = 0; v < per_frame; ++v) {
                const int acq_index = k * per_frame + v;  // position in acquisition time
                const int angle_index = reverse ? (n - 1 - acq_index) : acq_index;
                views.angles[v] = angle_index * step;
            }
            schedule.frame_views.push_back(std::move(views));
            // centre of the frame's acquisition window
            schedule.frame_times.push_back(start + (k + 0.5) * per_frame * view_dt);
        }
    }
    schedule.validate();
    return schedule;
}

std::size_t SinogramStack::ray_count() const {
    std::size_t n = 0;
    for (const auto& f : frames) n += f.data.size();
    return n;
}

void SinogramStack::validate() const {
    if (weights.size() != frames.size())
        throw std::invalid_argument("SinogramStack: weight blocks do not match frames");
    for (std::size_t t = 0; t < frames.size(); ++t) {
        frames[t].validate();
        if (weights[t].size() != frames[t].data.size())
            throw std::invalid_argument("SinogramStack: weight block shape mismatch");
        for (double w : weights[t])
            if (!(w > 0.0) || !std::isfinite(w))
                throw std::invalid_argument("SinogramStack: weights must be positive and finite");
    }
}

Sinogram apply_poisson_noise(const Sinogram& ideal, double i0, std::uint64_t seed,
                             std::uint64_t ray_offset) {
    if (!(i0 > 0.0)) throw std::invalid_argument("apply_poisson_noise: I0 must be positive");
    ideal.validate();
    for (double l : ideal.data)
        if (l < 0.0) throw std::invalid_argument("apply_poisson_noise: negative line integral");

    Sinogram noisy = ideal;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(ideal.data.size()); ++r) {
        const double lambda = i0 * std::exp(-ideal.data[r]);
        std::mt19937_64 rng(mix_seed(seed, ray_offset + static_cast<std::uint64_t>(r)));
        std::poisson_distribution<long long> poisson(lambda);
        const long long counts = std::max<long long>(poisson(rng), 1);
        noisy.data[r] = std::log(i0 / static_cast<double>(counts));
    }
    return noisy;
}

SinogramStack apply_poisson_noise(const SinogramStack& ideal, double i0, std::uint64_t seed,
                                  std::uint64_t ray_offset) {
    SinogramStack noisy = ideal;
    std::uint64_t offset = ray_offset;
    for (std::size_t t = 0; t < ideal.frames.size(); ++t) {
        noisy.frames[t] = apply_poisson_noise(ideal.frames[t], i0, seed, offset);
        offset += ideal.frames[t].data.size();
    }
    return noisy;
}

std::vector<std::vector<double>> estimate_weights(const SinogramStack& noisy, double i0) {
    std::vector<std::vector<double>> weights(noisy.frames.size());
    double max_w = 0.0;
    for (std::size_t t = 0; t < noisy.frames.size(); ++t) {
        weights[t].resize(noisy.frames[t].data.size());
        for (std::size_t r = 0; r < weights[t].size(); ++r) {
            const double w = i0 * std::exp(-noisy.frames[t].data[r]);
            weights[t][r] = w;
            max_w = std::max(max_w, w);
        }
    }
    if (!(max_w > 0.0)) throw std::invalid_argument("estimate_weights: degenerate weights");
    for (auto& block : weights)
        for (double& w : block) w /= max_w;
    return weights;
}

SinogramStack subtract_mask(const SinogramStack& contrast, const std::vector<Sinogram>& mask_scans,
                            const ImageGrid& grid) {
    if (mask_scans.empty()) throw std::invalid_argument("subtract_mask: no mask scans");
    contrast.validate();
    const FanBeamGeometry& geom = contrast.geom;
    const int n = geom.views_per_rotation;

    // average mask readings per rotation angle
    std::unordered_map<long long, std::vector<double>> mask_sum;
    std::unordered_map<long long, int> mask_count;
    for (const auto& scan : mask_scans) {
        scan.validate();
        for (std::size_t v = 0; v < scan.n_views(); ++v) {
            const long long key = angle_key(scan.angles[v], n);
            auto& sum = mask_sum[key];
            if (sum.empty()) sum.assign(geom.n_det, 0.0);
            for (int k = 0; k < geom.n_det; ++k) sum[k] += scan.at(v, k);
            ++mask_count[key];
        }
    }

    bool all_matched = true;
    for (const auto& frame : contrast.frames) {
        for (double angle : frame.angles)
            if (!mask_sum.contains(angle_key(angle, n))) { all_matched = false; break; }
        if (!all_matched) break;
    }

    SinogramStack out = contrast;
    if (all_matched) {
        // every contrast angle was measured by the mask scans: subtract the
        // averaged reading directly (exact for noiseless data by linearity)
        for (auto& frame : out.frames) {
            for (std::size_t v = 0; v < frame.n_views(); ++v) {
                const long long key = angle_key(frame.angles[v], n);
                const auto& sum = mask_sum.at(key);
                const double inv = 1.0 / mask_count.at(key);
                for (int k = 0; k < geom.n_det; ++k) frame.at(v, k) -= sum[k] * inv;
            }
        }
        return out;
    }

    // angle grids differ: reconstruct the baseline from the averaged mask
    // scans and reproject it onto each frame's views
    std::vector<double> baseline(grid.npixels(), 0.0);
    for (const auto& scan : mask_scans) {
        const auto img = fbp_reconstruct(scan, grid);
        for (std::size_t i = 0; i < baseline.size(); ++i) baseline[i] += img[i];
    }
    for (double& v : baseline) v /= static_cast<double>(mask_scans.size());
    for (auto& frame : out.frames) {
        ViewSet views;
        views.angles = frame.angles;
        const Sinogram reproj = forward_project(baseline, grid, geom, views);
        for (std::size_t r = 0; r < frame.data.size(); ++r) frame.data[r] -= reproj.data[r];
    }
    return out;
}

}  // namespace perfrec
