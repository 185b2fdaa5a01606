#include <doctest.h>

#include "perfrec/phantom.hpp"

#include "oracles.hpp"

#include <cmath>
#include <numbers>

using namespace perfrec;

namespace {
const ImageGrid kGrid(64, 64, 1.0, 1.0);
}

TEST_CASE("single-tissue config gives a constant CBF map inside the brain") {
    PhantomConfig cfg = desk_phantom_config();
    std::erase_if(cfg.regions, [](const TissueRegion& r) {
        return r.label == TissueLabel::penumbra || r.label == TissueLabel::core;
    });
    const PhantomInstance phantom = build_phantom(cfg, kGrid);
    bool any = false;
    for (std::size_t i = 0; i < phantom.labels.size(); ++i) {
        if (phantom.labels[i] == TissueLabel::healthy) {
            CHECK(phantom.cbf[i] == 50.0);
            any = true;
        }
    }
    CHECK(any);
}

TEST_CASE("core-ellipse centre carries the core label and value") {
    const PhantomInstance phantom = build_phantom(desk_phantom_config(), kGrid);
    // core centred at (-12, -6): nearest pixel centre is (-11.5, -5.5)
    int ix = -1, iy = -1;
    for (int i = 0; i < kGrid.nx; ++i)
        if (std::abs(kGrid.pixel_x(i) + 11.5) < 1e-9) ix = i;
    for (int i = 0; i < kGrid.ny; ++i)
        if (std::abs(kGrid.pixel_y(i) + 5.5) < 1e-9) iy = i;
    REQUIRE(ix >= 0);
    REQUIRE(iy >= 0);
    const std::size_t idx = static_cast<std::size_t>(iy) * kGrid.nx + ix;
    CHECK(phantom.labels[idx] == TissueLabel::core);
    CHECK(phantom.cbf[idx] == 8.0);
    CHECK(phantom.t0[idx] == 7.0);
}

TEST_CASE("rasterized disk area is within 3% of pi r^2 for r = 20 px") {
    PhantomConfig cfg;
    cfg.regions = {{TissueLabel::healthy, 0.0, 0.0, 20.0, 20.0, 0.0, 50.0, 2.0, 0.02}};
    const PhantomInstance phantom = build_phantom(cfg, kGrid);
    std::size_t count = 0;
    for (auto label : phantom.labels)
        if (label == TissueLabel::healthy) ++count;
    const double analytic = std::numbers::pi * 20.0 * 20.0;
    CHECK(std::abs(static_cast<double>(count) - analytic) / analytic < 0.03);
}

TEST_CASE("region priority follows the fixed label order") {
    // core listed before the penumbra that covers it; priority must win
    PhantomConfig cfg;
    cfg.regions = {
        {TissueLabel::healthy, 0.0, 0.0, 25.0, 25.0, 0.0, 50.0, 2.0, 0.02},
        {TissueLabel::core, 0.0, 0.0, 4.0, 4.0, 0.0, 8.0, 7.0, 0.02},
        {TissueLabel::penumbra, 0.0, 0.0, 10.0, 10.0, 0.0, 20.0, 5.0, 0.02},
    };
    const PhantomInstance phantom = build_phantom(cfg, kGrid);
    const std::size_t centre = (kGrid.ny / 2) * static_cast<std::size_t>(kGrid.nx) + kGrid.nx / 2;
    CHECK(phantom.labels[centre] == TissueLabel::core);
}

TEST_CASE("invalid configurations are rejected") {
    PhantomConfig outside;
    outside.regions = {{TissueLabel::healthy, 0.0, 0.0, 40.0, 40.0, 0.0, 50.0, 2.0, 0.02}};
    CHECK_THROWS_AS(build_phantom(outside, kGrid), std::invalid_argument);

    PhantomConfig stray = desk_phantom_config();
    for (auto& r : stray.regions)
        if (r.label == TissueLabel::core) { r.center_x = 24.0; r.center_y = 20.0; }
    CHECK_THROWS_AS(build_phantom(stray, kGrid), std::invalid_argument);

    PhantomConfig degenerate = desk_phantom_config();
    degenerate.regions[0].semi_x = 0.0;
    CHECK_THROWS_AS(build_phantom(degenerate, kGrid), std::invalid_argument);
}

TEST_CASE("aif model") {
    const AifModel aif;  // arrival 4 s, shape 3, scale 1.5 s, peak 0.015
    SUBCASE("zero before arrival") {
        CHECK(sample_aif(aif, 0.0) == 0.0);
        CHECK(sample_aif(aif, 4.0) == 0.0);
    }
    SUBCASE("peak value at arrival + shape*scale") {
        CHECK(sample_aif(aif, 4.0 + 3.0 * 1.5) == doctest::Approx(0.015).epsilon(1e-12));
        for (double t = 0.0; t < 60.0; t += 0.01) CHECK(sample_aif(aif, t) <= 0.015 + 1e-12);
    }
    SUBCASE("finite positive integral over [0, 60]") {
        const double integral =
            oracle::trapezoid([&](double t) { return sample_aif(aif, t); }, 0.0, 60.0, 6000);
        CHECK(integral > 0.0);
        CHECK(std::isfinite(integral));
    }
}

TEST_CASE("ground-truth dynamic") {
    const PhantomInstance phantom = build_phantom(desk_phantom_config(), kGrid);
    const AifModel aif = phantom.config.aif;

    SUBCASE("zero enhancement before contrast arrival") {
        const TimeGrid tg(4, 0.5, 0.25);
        const DynamicImage x = ground_truth_dynamic(phantom, aif, tg);
        for (const auto& f : x.frames)
            for (double v : f) CHECK(v == 0.0);
    }

    const TimeGrid tg(32, 2.0, 1.0);
    const DynamicImage x = ground_truth_dynamic(phantom, aif, tg);

    SUBCASE("artery pixels trace the sampled AIF") {
        for (std::size_t i = 0; i < phantom.labels.size(); ++i) {
            if (phantom.labels[i] != TissueLabel::artery) continue;
            for (int j = 0; j < 32; ++j)
                CHECK(x.frames[j][i] ==
                      doctest::Approx(sample_aif(aif, tg.times[j])).epsilon(1e-12));
        }
    }
    SUBCASE("healthy-tissue trace equals the brute-force convolution oracle") {
        std::size_t pixel = 0;
        for (std::size_t i = 0; i < phantom.labels.size(); ++i)
            if (phantom.labels[i] == TissueLabel::healthy) { pixel = i; break; }
        ParamImagePair u(kGrid);
        u.cbf = phantom.cbf;
        u.t0 = phantom.t0;
        const Mat ref = oracle::convolution_reference(u, sample_aif(aif, tg.times), tg.dt,
                                                      phantom.config.rho, 1.0 / 6000.0,
                                                      phantom.config.decay_seconds, tg.times);
        for (int j = 0; j < 32; ++j)
            CHECK(x.frames[j][pixel] == doctest::Approx(ref(pixel, j)).epsilon(1e-10));
    }
    SUBCASE("enhancement is non-negative everywhere") {
        for (const auto& f : x.frames)
            for (double v : f) CHECK(v >= 0.0);
    }
    SUBCASE("csf, skull and background stay at zero") {
        for (std::size_t i = 0; i < phantom.labels.size(); ++i) {
            const auto label = phantom.labels[i];
            if (label == TissueLabel::csf || label == TissueLabel::skull ||
                label == TissueLabel::background)
                for (int j = 0; j < 32; ++j) CHECK(x.frames[j][i] == 0.0);
        }
    }
}

// The flow-scaled residue is nonzero from lag zero, so the tissue peak lands
// strictly after the AIF peak but not a full T0 after it (the plateau length
// delays the peak monotonically; the perfusion tests cover monotonicity).
TEST_CASE("tissue curves peak strictly after the AIF peak") {
    const PhantomInstance phantom = build_phantom(desk_phantom_config(), kGrid);
    const AifModel aif = phantom.config.aif;
    const double dt = 0.05;
    const TimeGrid fine(static_cast<int>(64.0 / dt), dt, 0.5 * dt);
    const DynamicImage x = ground_truth_dynamic(phantom, aif, fine);

    int aif_peak = 0;
    const std::vector<double> aif_fine = sample_aif(aif, fine.times);
    for (int j = 1; j < fine.frame_count; ++j)
        if (aif_fine[j] > aif_fine[aif_peak]) aif_peak = j;

    double min_delay[3] = {1e9, 1e9, 1e9};
    for (std::size_t i = 0; i < phantom.labels.size(); i += 3) {
        const auto label = phantom.labels[i];
        if (label != TissueLabel::healthy && label != TissueLabel::penumbra &&
            label != TissueLabel::core)
            continue;
        int peak = 0;
        for (int j = 1; j < fine.frame_count; ++j)
            if (x.frames[j][i] > x.frames[peak][i]) peak = j;
        const double delay = fine.times[peak] - fine.times[aif_peak];
        CHECK(delay > 0.0);
        const int slot = label == TissueLabel::healthy ? 0 : (label == TissueLabel::penumbra ? 1 : 2);
        min_delay[slot] = std::min(min_delay[slot], delay);
    }
    // longer programmed lag means a later peak across the tissue types
    CHECK(min_delay[0] < min_delay[1]);
    CHECK(min_delay[1] < min_delay[2]);
}

TEST_CASE("ground-truth MTT equals CBV/CBF where CBF is positive") {
    const PhantomInstance phantom = build_phantom(desk_phantom_config(), kGrid);
    for (std::size_t i = 0; i < phantom.cbf.size(); ++i) {
        if (phantom.cbf[i] > 0.0)
            CHECK(phantom.mtt[i] ==
                  doctest::Approx(60.0 * phantom.cbv[i] / phantom.cbf[i]).epsilon(1e-12));
        else
            CHECK(phantom.mtt[i] == 0.0);
    }
}
