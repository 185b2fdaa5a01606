#include <doctest.h>

#include "perfrec/core.hpp"

#include <random>

using namespace perfrec;

TEST_CASE("stack_frames of zero frames gives a zero matrix") {
    std::vector<std::vector<double>> frames(2, std::vector<double>(4, 0.0));
    const Mat x = stack_frames(frames);
    CHECK(x.rows == 4);
    CHECK(x.cols == 2);
    for (double v : x.data) CHECK(v == 0.0);
}

TEST_CASE("stack_frames puts constant frames into constant columns") {
    std::vector<std::vector<double>> frames = {std::vector<double>(6, 3.5),
                                               std::vector<double>(6, -1.25)};
    const Mat x = stack_frames(frames);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(x(i, 0) == 3.5);
        CHECK(x(i, 1) == -1.25);
    }
}

TEST_CASE("unstack inverts stack for random frames") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    std::vector<std::vector<double>> frames(3, std::vector<double>(16));
    for (auto& f : frames)
        for (double& v : f) v = dist(rng);
    const auto round_trip = unstack_frames(stack_frames(frames));
    REQUIRE(round_trip.size() == frames.size());
    for (std::size_t j = 0; j < frames.size(); ++j)
        for (std::size_t i = 0; i < frames[j].size(); ++i)
            CHECK(round_trip[j][i] == frames[j][i]);
}

TEST_CASE("stack_frames rejects mismatched frame sizes") {
    std::vector<std::vector<double>> frames = {std::vector<double>(4, 0.0),
                                               std::vector<double>(5, 0.0)};
    CHECK_THROWS_AS(stack_frames(frames), std::invalid_argument);
}

TEST_CASE("vectorize is column-major concatenation") {
    Mat x(2, 2);
    x(0, 0) = 1; x(0, 1) = 3;
    x(1, 0) = 2; x(1, 1) = 4;
    const auto v = vectorize(x);
    CHECK(v == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("vectorize of a zero matrix is a zero vector") {
    const auto v = vectorize(Mat(3, 4, 0.0));
    for (double value : v) CHECK(value == 0.0);
}

TEST_CASE("devectorize inverts vectorize") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Mat x(5, 7);
    for (double& v : x.data) v = dist(rng);
    const Mat back = devectorize(vectorize(x), 5, 7);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(back.data[i] == x.data[i]);
}

TEST_CASE("grid-to-vector indexing is a bijection on a small grid") {
    const ImageGrid grid(8, 8, 1.0, 1.0);
    std::vector<int> hits(grid.npixels(), 0);
    for (int iy = 0; iy < grid.ny; ++iy)
        for (int ix = 0; ix < grid.nx; ++ix) ++hits[static_cast<std::size_t>(iy) * grid.nx + ix];
    for (int h : hits) CHECK(h == 1);
}

TEST_CASE("containers reject non-finite values") {
    CHECK_THROWS_AS(require_finite({1.0, std::nan("")}, "test"), std::invalid_argument);
    Mat x(2, 2, 0.0);
    x(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(vectorize(x), std::invalid_argument);

    DynamicImage dyn(ImageGrid(8, 8, 1.0, 1.0), 2);
    dyn.frames[1][3] = std::nan("");
    CHECK_THROWS_AS(dyn.validate(), std::invalid_argument);
}

TEST_CASE("grid constructor enforces invariants") {
    CHECK_THROWS_AS(ImageGrid(4, 8, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ImageGrid(8, 8, 0.0, 1.0), std::invalid_argument);
    const ImageGrid g(16, 16, 0.5, 0.5);
    CHECK(g.npixels() == 256);
    CHECK(g.pixel_x(0) == doctest::Approx(-3.75));
    CHECK(g.pixel_x(15) == doctest::Approx(3.75));
}

TEST_CASE("time grid requires uniform increasing times") {
    CHECK_THROWS_AS(TimeGrid::from_times({1.0, 1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid::from_times({1.0, 2.0, 4.0}), std::invalid_argument);
    const TimeGrid tg(4, 2.0, 1.0);
    CHECK(tg.times == std::vector<double>{1.0, 3.0, 5.0, 7.0});
}
