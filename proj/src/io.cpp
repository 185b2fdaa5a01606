#include "perfrec/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace perfrec::io {

namespace {

std::filesystem::path meta_path(const std::filesystem::path& raw_path) {
    std::filesystem::path p = raw_path;
    p.replace_extension(".meta");
    return p;
}

void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    const auto n = static_cast<std::size_t>(in.tellg());
    std::vector<char> bytes(n);
    in.seekg(0);
    in.read(bytes.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("read failed: " + path.string());
    return bytes;
}

std::vector<float> to_f32(const std::vector<double>& values) {
    std::vector<float> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]);
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
}

}  // namespace

void write_meta(const std::filesystem::path& raw_path, const Meta& meta) {
    std::ofstream out(meta_path(raw_path));
    if (!out) throw std::runtime_error("cannot write meta for " + raw_path.string());
    for (const auto& [key, value] : meta) out << key << " = " << value << "\n";
}

Meta read_meta(const std::filesystem::path& raw_path) {
    std::ifstream in(meta_path(raw_path));
    if (!in) throw std::runtime_error("missing meta sidecar for " + raw_path.string());
    Meta meta;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        const auto trim = [](std::string& s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            s = (b == std::string::npos) ? std::string{} : s.substr(b, e - b + 1);
        };
        trim(key);
        trim(value);
        if (!key.empty()) meta[key] = value;
    }
    return meta;
}

void write_image(const std::filesystem::path& path, const std::vector<double>& pixels,
                 const ImageGrid& grid, const std::string& units, Meta extra) {
    if (pixels.size() != grid.npixels())
        throw std::invalid_argument("write_image: pixel count does not match grid");
    const auto f32 = to_f32(pixels);
    write_bytes(path, f32.data(), f32.size() * sizeof(float));
    extra["nx"] = std::to_string(grid.nx);
    extra["ny"] = std::to_string(grid.ny);
    extra["dx"] = format_double(grid.dx);
    extra["dy"] = format_double(grid.dy);
    extra["units"] = units;
    extra["dtype"] = "float32-le";
    extra["order"] = "row-major";
    write_meta(path, extra);
}

std::vector<double> read_image(const std::filesystem::path& path, ImageGrid* grid_out) {
    const auto bytes = read_bytes(path);
    if (bytes.size() % sizeof(float) != 0)
        throw std::runtime_error("image file size not a multiple of 4: " + path.string());
    std::vector<double> pixels(bytes.size() / sizeof(float));
    const float* f = reinterpret_cast<const float*>(bytes.data());
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = f[i];
    if (grid_out) {
        const Meta meta = read_meta(path);
        *grid_out = ImageGrid(std::stoi(meta.at("nx")), std::stoi(meta.at("ny")),
                              std::stod(meta.at("dx")), std::stod(meta.at("dy")));
        if (grid_out->npixels() != pixels.size())
            throw std::runtime_error("image meta disagrees with file size: " + path.string());
    }
    return pixels;
}

void write_f32(const std::filesystem::path& path, const std::vector<double>& values) {
    const auto f32 = to_f32(values);
    write_bytes(path, f32.data(), f32.size() * sizeof(float));
}

std::vector<double> read_f32(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    if (bytes.size() % sizeof(float) != 0)
        throw std::runtime_error("f32 file size not a multiple of 4: " + path.string());
    std::vector<double> values(bytes.size() / sizeof(float));
    const float* f = reinterpret_cast<const float*>(bytes.data());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = f[i];
    return values;
}

void write_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels,
                  const ImageGrid& grid, Meta extra) {
    if (labels.size() != grid.npixels())
        throw std::invalid_argument("write_labels: label count does not match grid");
    write_bytes(path, labels.data(), labels.size());
    extra["nx"] = std::to_string(grid.nx);
    extra["ny"] = std::to_string(grid.ny);
    extra["dx"] = format_double(grid.dx);
    extra["dy"] = format_double(grid.dy);
    extra["units"] = "label";
    extra["dtype"] = "uint8";
    extra["order"] = "row-major";
    write_meta(path, extra);
}

std::vector<std::uint8_t> read_labels(const std::filesystem::path& path, ImageGrid* grid_out) {
    const auto bytes = read_bytes(path);
    std::vector<std::uint8_t> labels(bytes.size());
    std::memcpy(labels.data(), bytes.data(), bytes.size());
    if (grid_out) {
        const Meta meta = read_meta(path);
        *grid_out = ImageGrid(std::stoi(meta.at("nx")), std::stoi(meta.at("ny")),
                              std::stod(meta.at("dx")), std::stod(meta.at("dy")));
    }
    return labels;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i)
        out << header[i] << (i + 1 < header.size() ? "," : "\n");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << row[i] << (i + 1 < row.size() ? "," : "\n");
    }
}

void write_csv_rows(const std::filesystem::path& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i)
        out << header[i] << (i + 1 < header.size() ? "," : "\n");
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << row[i] << (i + 1 < row.size() ? "," : "\n");
    }
}

void write_pgm(const std::filesystem::path& path, const std::vector<double>& pixels,
               const ImageGrid& grid, double window, double level) {
    if (pixels.size() != grid.npixels())
        throw std::invalid_argument("write_pgm: pixel count does not match grid");
    const double lo = level - 0.5 * window;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "P5\n" << grid.nx << " " << grid.ny << "\n255\n";
    std::vector<unsigned char> row(grid.nx);
    // top row of the file is the largest y; keeps previews upright
    for (int iy = grid.ny - 1; iy >= 0; --iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double t = (pixels[static_cast<std::size_t>(iy) * grid.nx + ix] - lo) / window;
            row[ix] = static_cast<unsigned char>(std::clamp(t, 0.0, 1.0) * 255.0 + 0.5);
        }
        out.write(reinterpret_cast<const char*>(row.data()), grid.nx);
    }
}

std::uint64_t fnv1a64(const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_file(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes.data(), bytes.size());
    return os.str();
}

}  // namespace perfrec::io
