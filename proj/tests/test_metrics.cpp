#include <doctest.h>

#include "perfrec/metrics.hpp"

#include "oracles.hpp"

#include <cmath>

using namespace perfrec;

TEST_CASE("rrmse") {
    SUBCASE("identity gives zero percent") {
        const auto y = oracle::random_vector(64, 1, 0.0, 10.0);
        CHECK(rrmse(y, y) == doctest::Approx(0.0));
    }
    SUBCASE("direct evaluation on a two-pixel image") {
        CHECK(rrmse({0.0, 5.0}, {0.0, 10.0}) == doctest::Approx(100.0 * std::sqrt(12.5) / 10.0));
    }
    SUBCASE("invariant under joint scaling") {
        const auto y = oracle::random_vector(64, 2, 0.0, 5.0);
        const auto t = oracle::random_vector(64, 3, 0.1, 5.0);
        std::vector<double> y2(y), t2(t);
        for (double& v : y2) v *= 7.0;
        for (double& v : t2) v *= 7.0;
        CHECK(rrmse(y, t) == doctest::Approx(rrmse(y2, t2)).epsilon(1e-12));
    }
    SUBCASE("zero truth maximum is an error") {
        CHECK_THROWS_AS(rrmse({1.0, 2.0}, {0.0, 0.0}), std::invalid_argument);
    }
    SUBCASE("masked evaluation ignores pixels outside the mask") {
        const std::vector<double> y = {100.0, 5.0};
        const std::vector<double> t = {0.0, 5.0};
        const std::vector<double> mask = {0.0, 1.0};
        CHECK(rrmse(y, t, &mask) == doctest::Approx(0.0));
    }
}

TEST_CASE("psnr") {
    SUBCASE("a perfect match hits the sentinel cap") {
        const auto y = oracle::random_vector(16, 4);
        CHECK(psnr(y, y, 1.0) == doctest::Approx(300.0));
    }
    SUBCASE("MAX 1 and MSE 0.01 give 20 dB") {
        std::vector<double> y(100, 0.1), t(100, 0.0);
        CHECK(mse(y, t) == doctest::Approx(0.01));
        CHECK(psnr(y, t, 1.0) == doctest::Approx(20.0));
    }
    SUBCASE("halving the MSE adds 10*log10(2) dB") {
        std::vector<double> y(100, 0.1), y2(100, 0.1 / std::sqrt(2.0)), t(100, 0.0);
        CHECK(psnr(y2, t, 1.0) - psnr(y, t, 1.0) == doctest::Approx(10.0 * std::log10(2.0)));
    }
}

TEST_CASE("default ROI placement on the desk phantom") {
    const ImageGrid grid(64, 64, 1.0, 1.0);
    const PhantomInstance phantom = build_phantom(desk_phantom_config(), grid);
    const auto rois = default_rois(phantom);
    REQUIRE(rois.size() == 10);
    int healthy = 0, penumbra = 0, core = 0;
    for (const auto& roi : rois) {
        CHECK_FALSE(roi.pixels.empty());
        if (roi.name.starts_with("healthy")) ++healthy;
        if (roi.name.starts_with("penumbra")) ++penumbra;
        if (roi.name.starts_with("core")) ++core;
        // every ROI pixel carries the label in its name
        for (std::size_t idx : roi.pixels) {
            CHECK(idx < grid.npixels());
            CHECK(roi.name.starts_with(to_string(phantom.labels[idx])));
        }
    }
    CHECK(healthy == 4);
    CHECK(penumbra == 3);
    CHECK(core == 3);

    SUBCASE("placement is deterministic") {
        const auto again = default_rois(phantom);
        for (std::size_t r = 0; r < rois.size(); ++r) {
            CHECK(rois[r].name == again[r].name);
            CHECK(rois[r].pixels == again[r].pixels);
        }
    }
}

TEST_CASE("roi report") {
    const ImageGrid grid(64, 64, 1.0, 1.0);
    const PhantomInstance phantom = build_phantom(desk_phantom_config(), grid);
    const auto rois = default_rois(phantom);

    SUBCASE("truth against itself is all zeros") {
        const auto rows = roi_report({{"CBF", &phantom.cbf}}, {{"CBF", &phantom.cbf}}, rois);
        REQUIRE(rows.size() == rois.size());
        for (const auto& row : rows) {
            CHECK(row.rrmse_pct == doctest::Approx(0.0));
            CHECK(row.stddev == doctest::Approx(0.0));
        }
    }
    SUBCASE("single-pixel ROI reports that pixel") {
        RoiSpec single{"one", {grid.npixels() / 2 + 7}};
        const auto maps = oracle::random_vector(grid.npixels(), 5, 0.0, 10.0);
        const auto rows = roi_report({{"m", &maps}}, {{"m", &maps}}, {single});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].mean == doctest::Approx(maps[single.pixels[0]]));
        CHECK(rows[0].stddev == doctest::Approx(0.0));
    }
    SUBCASE("whole-image ROI reproduces the plain rrmse") {
        RoiSpec whole{"all", {}};
        for (std::size_t i = 0; i < grid.npixels(); ++i) whole.pixels.push_back(i);
        const auto y = oracle::random_vector(grid.npixels(), 6, 0.0, 40.0);
        const auto rows = roi_report({{"CBF", &y}}, {{"CBF", &phantom.cbf}}, {whole});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].rrmse_pct == doctest::Approx(rrmse(y, phantom.cbf)).epsilon(1e-12));
    }
    SUBCASE("empty ROI yields a skipped row") {
        const auto rows = roi_report({{"m", &phantom.cbf}}, {{"m", &phantom.cbf}},
                                     {RoiSpec{"empty", {}}});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].skipped);
    }
}
