#include <doctest.h>

#include "perfrec/acquisition.hpp"

#include "perfrec/phantom.hpp"
#include "perfrec/projector.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace perfrec;

namespace {

ProtocolConfig desk_protocol() {
    ProtocolConfig p;
    p.scans = 8;
    p.subsets_per_scan = 4;
    p.views_per_rotation = 200;
    p.seconds_per_rotation = 8.0;
    p.mask_scans = 2;
    return p;
}

struct SmallSetup {
    ImageGrid grid{32, 32, 1.0, 1.0};
    FanBeamGeometry geom;
    ScanSchedule schedule;
    SmallSetup() {
        geom.source_to_iso = 750.0;
        geom.source_to_detector = 1200.0;
        geom.n_det = 64;
        geom.det_pitch = 1.25;
        geom.views_per_rotation = 40;
        ProtocolConfig p;
        p.scans = 2;
        p.subsets_per_scan = 2;
        p.views_per_rotation = 40;
        p.seconds_per_rotation = 8.0;
        p.mask_scans = 2;
        schedule = make_schedule(p);
    }
};

}  // namespace

TEST_CASE("schedule arithmetic") {
    SUBCASE("K=1, S=8 gives frame centres 4, 12, ..., 60 s") {
        ProtocolConfig p = desk_protocol();
        p.subsets_per_scan = 1;
        const ScanSchedule schedule = make_schedule(p);
        REQUIRE(schedule.frame_count() == 8);
        for (int s = 0; s < 8; ++s)
            CHECK(schedule.frame_times[s] == doctest::Approx(4.0 + 8.0 * s));
    }
    SUBCASE("K=4 gives 32 frames of 50 views") {
        const ScanSchedule schedule = make_schedule(desk_protocol());
        REQUIRE(schedule.frame_count() == 32);
        for (const auto& views : schedule.frame_views) CHECK(views.count() == 50);
        const TimeGrid tg = schedule.time_grid();
        CHECK(tg.dt == doctest::Approx(2.0));
        CHECK(tg.times.front() == doctest::Approx(1.0));
        CHECK(tg.times.back() == doctest::Approx(63.0));
    }
    SUBCASE("forward scan ascends, the next scan descends") {
        const ScanSchedule schedule = make_schedule(desk_protocol());
        const auto& first = schedule.frame_views[0];
        CHECK_FALSE(first.reverse);
        CHECK(first.angles[0] < first.angles[1]);
        const auto& second_scan = schedule.frame_views[4];
        CHECK(second_scan.reverse);
        CHECK(second_scan.angles[0] > second_scan.angles[1]);
    }
    SUBCASE("subsets partition each rotation without overlap or loss") {
        const ScanSchedule schedule = make_schedule(desk_protocol());
        for (int s = 0; s < schedule.scans; ++s) {
            std::vector<double> all;
            for (int k = 0; k < schedule.subsets_per_scan; ++k) {
                const auto& v = schedule.frame_views[s * schedule.subsets_per_scan + k];
                all.insert(all.end(), v.angles.begin(), v.angles.end());
            }
            std::sort(all.begin(), all.end());
            REQUIRE(all.size() == 200);
            for (int v = 0; v < 200; ++v)
                CHECK(all[v] == doctest::Approx(v * 2.0 * std::numbers::pi / 200.0));
        }
    }
    SUBCASE("indivisible subset count is rejected") {
        ProtocolConfig p = desk_protocol();
        p.subsets_per_scan = 3;
        CHECK_THROWS_AS(make_schedule(p), std::invalid_argument);
    }
    SUBCASE("mask scans precede contrast start") {
        const ScanSchedule schedule = make_schedule(desk_protocol());
        REQUIRE(schedule.mask_views.size() == 2);
        CHECK(schedule.mask_start_times[0] == doctest::Approx(-16.0));
        CHECK(schedule.mask_start_times[1] == doctest::Approx(-8.0));
    }
}

TEST_CASE("poisson noise statistics") {
    FanBeamGeometry geom;
    geom.source_to_iso = 750.0;
    geom.source_to_detector = 1200.0;
    geom.n_det = 100;
    geom.det_pitch = 1.0;

    SUBCASE("zero line integral at I0=1e6: sample mean within 3 sigma of zero") {
        const int draws = 10000;
        std::vector<double> angles(draws / 100, 0.0);
        Sinogram ideal(geom, angles);  // 100 views x 100 bins = 10^4 rays at l = 0
        const Sinogram noisy = apply_poisson_noise(ideal, 1e6, 7);
        double mean = 0.0, var = 0.0;
        for (double v : noisy.data) mean += v;
        mean /= draws;
        for (double v : noisy.data) var += (v - mean) * (v - mean);
        var /= (draws - 1);
        const double sigma_mean = std::sqrt(var / draws);
        CHECK(std::abs(mean) < 3.0 * sigma_mean + 1e-5);
    }
    SUBCASE("same seed reproduces the same noise") {
        std::vector<double> angles(4, 0.0);
        Sinogram ideal(geom, angles);
        for (std::size_t r = 0; r < ideal.data.size(); ++r) ideal.data[r] = 0.5;
        const Sinogram a = apply_poisson_noise(ideal, 1e5, 42);
        const Sinogram b = apply_poisson_noise(ideal, 1e5, 42);
        CHECK(a.data == b.data);
        const Sinogram c = apply_poisson_noise(ideal, 1e5, 43);
        CHECK(a.data != c.data);
    }
    SUBCASE("count variance tracks the count mean within 5% at l = 1") {
        const std::size_t draws = 100000;
        std::vector<double> angles(draws / 100, 0.0);
        Sinogram ideal(geom, angles);
        for (double& v : ideal.data) v = 1.0;
        const double i0 = 1e4;
        const Sinogram noisy = apply_poisson_noise(ideal, i0, 11);
        std::vector<double> counts(noisy.data.size());
        for (std::size_t r = 0; r < counts.size(); ++r)
            counts[r] = i0 * std::exp(-noisy.data[r]);
        double mean = 0.0;
        for (double c : counts) mean += c;
        mean /= static_cast<double>(counts.size());
        double var = 0.0;
        for (double c : counts) var += (c - mean) * (c - mean);
        var /= static_cast<double>(counts.size() - 1);
        CHECK(std::abs(var - mean) / mean < 0.05);
    }
    SUBCASE("negative line integrals and bad I0 are rejected") {
        std::vector<double> angles(1, 0.0);
        Sinogram ideal(geom, angles);
        CHECK_THROWS_AS(apply_poisson_noise(ideal, 0.0, 1), std::invalid_argument);
        ideal.data[3] = -0.1;
        CHECK_THROWS_AS(apply_poisson_noise(ideal, 1e5, 1), std::invalid_argument);
    }
}

TEST_CASE("noise commutes with frame blocking") {
    SmallSetup s;
    DynamicImage x(s.grid, s.schedule.frame_count());
    const PhantomInstance phantom = build_phantom(desk_phantom_config(), ImageGrid(64, 64, 1.0, 1.0));
    for (auto& f : x.frames) f.assign(s.grid.npixels(), 0.001);
    SinogramStack stack = project_dynamic(x, s.schedule, s.geom);

    const SinogramStack blocked = apply_poisson_noise(stack, 1e5, 5, 0);
    std::uint64_t offset = 0;
    for (std::size_t t = 0; t < stack.frames.size(); ++t) {
        const Sinogram frame = apply_poisson_noise(stack.frames[t], 1e5, 5, offset);
        CHECK(frame.data == blocked.frames[t].data);
        offset += frame.data.size();
    }
}

TEST_CASE("weight estimation") {
    SmallSetup s;
    SinogramStack stack;
    stack.geom = s.geom;
    std::vector<double> angles(2, 0.0);
    Sinogram frame(s.geom, angles);
    stack.frames = {frame};
    stack.weights = {std::vector<double>(frame.data.size(), 1.0)};

    SUBCASE("zero line integrals give unit weights") {
        const auto weights = estimate_weights(stack, 1e5);
        for (double w : weights[0]) CHECK(w == 1.0);
    }
    SUBCASE("larger line integral gives strictly smaller weight") {
        stack.frames[0].data[0] = 0.3;
        stack.frames[0].data[1] = 0.7;
        const auto weights = estimate_weights(stack, 1e5);
        CHECK(weights[0][0] > weights[0][1]);
    }
    SUBCASE("l = ln 2 halves the weight") {
        stack.frames[0].data[1] = std::log(2.0);
        const auto weights = estimate_weights(stack, 1e5);
        CHECK(weights[0][1] == doctest::Approx(0.5 * weights[0][0]));
    }
}

TEST_CASE("mask subtraction") {
    SmallSetup s;
    // scaled-down head: reuse the desk regions shrunk to the 32 mm grid
    PhantomConfig cfg = desk_phantom_config();
    for (auto& r : cfg.regions) {
        r.center_x *= 0.45;
        r.center_y *= 0.45;
        r.semi_x *= 0.45;
        r.semi_y *= 0.45;
    }
    const PhantomInstance phantom = build_phantom(cfg, s.grid);
    const TimeGrid tg = s.schedule.time_grid();
    const DynamicImage enhancement = ground_truth_dynamic(phantom, cfg.aif, tg);
    const SinogramStack enh_stack = project_dynamic(enhancement, s.schedule, s.geom);

    // totals = baseline + enhancement on each frame's views
    SinogramStack total = enh_stack;
    std::vector<Sinogram> masks;
    for (const auto& views : s.schedule.mask_views)
        masks.push_back(forward_project(phantom.mu0, s.grid, s.geom, views));
    for (auto& frame : total.frames) {
        ViewSet views;
        views.angles = frame.angles;
        const Sinogram base = forward_project(phantom.mu0, s.grid, s.geom, views);
        for (std::size_t r = 0; r < frame.data.size(); ++r) frame.data[r] += base.data[r];
    }

    SUBCASE("zero-valued masks leave the input unchanged") {
        std::vector<Sinogram> zeros;
        for (const auto& views : s.schedule.mask_views) zeros.emplace_back(s.geom, views.angles);
        const SinogramStack out = subtract_mask(total, zeros, s.grid);
        for (std::size_t t = 0; t < out.frames.size(); ++t)
            CHECK(out.frames[t].data == total.frames[t].data);
    }
    SUBCASE("missing masks raise") {
        CHECK_THROWS_AS(subtract_mask(total, {}, s.grid), std::invalid_argument);
    }
    SUBCASE("noiseless subtraction recovers the enhancement projections to 1e-3") {
        const SinogramStack out = subtract_mask(total, masks, s.grid);
        double err2 = 0.0, norm2 = 0.0;
        for (std::size_t t = 0; t < out.frames.size(); ++t)
            for (std::size_t r = 0; r < out.frames[t].data.size(); ++r) {
                const double d = out.frames[t].data[r] - enh_stack.frames[t].data[r];
                err2 += d * d;
                norm2 += enh_stack.frames[t].data[r] * enh_stack.frames[t].data[r];
            }
        CHECK(std::sqrt(err2 / norm2) < 1e-3);
    }
    SUBCASE("null experiment: no contrast leaves only zero-mean noise") {
        SinogramStack baseline_only = enh_stack;
        for (auto& frame : baseline_only.frames) {
            ViewSet views;
            views.angles = frame.angles;
            frame = forward_project(phantom.mu0, s.grid, s.geom, views);
        }
        const double i0 = 1e5;
        std::vector<Sinogram> noisy_masks;
        const std::uint64_t rays = static_cast<std::uint64_t>(s.geom.views_per_rotation) * s.geom.n_det;
        for (std::size_t m = 0; m < masks.size(); ++m)
            noisy_masks.push_back(apply_poisson_noise(masks[m], i0, 3, m * rays));
        const SinogramStack noisy = apply_poisson_noise(baseline_only, i0, 3, masks.size() * rays);
        const SinogramStack out = subtract_mask(noisy, noisy_masks, s.grid);
        double mean = 0.0, var = 0.0;
        std::size_t n = 0;
        for (const auto& frame : out.frames)
            for (double v : frame.data) { mean += v; ++n; }
        mean /= static_cast<double>(n);
        for (const auto& frame : out.frames)
            for (double v : frame.data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n - 1);
        CHECK(std::abs(mean) < 3.0 * std::sqrt(var / static_cast<double>(n)));
    }
    SUBCASE("mismatched mask angles fall back to reconstruct-and-reproject") {
        // shift the mask angle grid so no angle matches exactly
        std::vector<Sinogram> shifted;
        for (const auto& views : s.schedule.mask_views) {
            ViewSet off;
            off.angles = views.angles;
            for (double& a : off.angles)
                a = std::fmod(a + 0.3 * 2.0 * std::numbers::pi / s.geom.views_per_rotation,
                              2.0 * std::numbers::pi);
            shifted.push_back(forward_project(phantom.mu0, s.grid, s.geom, off));
        }
        const SinogramStack out = subtract_mask(total, shifted, s.grid);
        // baseline contribution must shrink by at least 10x
        double before2 = 0.0, after2 = 0.0;
        for (std::size_t t = 0; t < out.frames.size(); ++t)
            for (std::size_t r = 0; r < out.frames[t].data.size(); ++r) {
                const double base = total.frames[t].data[r] - enh_stack.frames[t].data[r];
                const double residual = out.frames[t].data[r] - enh_stack.frames[t].data[r];
                before2 += base * base;
                after2 += residual * residual;
            }
        CHECK(after2 < 0.01 * before2);
    }
}
