#include <doctest.h>

#include "perfrec/io.hpp"

#include <filesystem>
#include <random>

using namespace perfrec;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "perfrec_io_test";
    fs::create_directories(dir);
    return dir;
}
}  // namespace

TEST_CASE("image round-trips through the raw-float format at float32 precision") {
    const ImageGrid grid(8, 8, 1.0, 1.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<double> pixels(grid.npixels());
    for (double& v : pixels) v = dist(rng);

    const fs::path path = temp_dir() / "img.f32";
    io::write_image(path, pixels, grid, "1/mm");
    ImageGrid back_grid;
    const auto back = io::read_image(path, &back_grid);
    CHECK(back_grid == grid);
    for (std::size_t i = 0; i < pixels.size(); ++i)
        CHECK(back[i] == doctest::Approx(pixels[i]).epsilon(1e-7));

    const auto meta = io::read_meta(path);
    CHECK(meta.at("units") == "1/mm");
    CHECK(meta.at("nx") == "8");
    CHECK(meta.at("order") == "row-major");
}

TEST_CASE("label maps round-trip as raw bytes") {
    const ImageGrid grid(8, 8, 1.0, 1.0);
    std::vector<std::uint8_t> labels(grid.npixels());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint8_t>(i % 7);
    const fs::path path = temp_dir() / "labels.u8";
    io::write_labels(path, labels, grid);
    CHECK(io::read_labels(path) == labels);
}

TEST_CASE("hash is content-stable and order-sensitive") {
    const fs::path a = temp_dir() / "a.f32";
    const fs::path b = temp_dir() / "b.f32";
    io::write_f32(a, {1.0, 2.0, 3.0});
    io::write_f32(b, {1.0, 2.0, 3.0});
    CHECK(io::hash_file(a) == io::hash_file(b));
    io::write_f32(b, {3.0, 2.0, 1.0});
    CHECK(io::hash_file(a) != io::hash_file(b));
}

TEST_CASE("pgm preview clamps to the display window") {
    const ImageGrid grid(8, 8, 1.0, 1.0);
    std::vector<double> pixels(grid.npixels(), 1e9);
    const fs::path path = temp_dir() / "preview.pgm";
    io::write_pgm(path, pixels, grid, 60.0, 30.0);
    CHECK(fs::file_size(path) > 64);
}

TEST_CASE("missing files raise") {
    CHECK_THROWS(io::read_f32(temp_dir() / "does_not_exist.f32"));
    CHECK_THROWS(io::read_meta(temp_dir() / "does_not_exist.f32"));
}
