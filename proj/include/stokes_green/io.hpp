#pragma once

// Flat binary exports with JSON metadata sidecars (<name>.bin + <name>.json).
// Multi-byte values are little-endian float64; cells are row-major with the
// last axis fastest.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stokes_green/coefficients.hpp"
#include "stokes_green/domain.hpp"
#include "stokes_green/green.hpp"
#include "stokes_green/system.hpp"

namespace sgreen {

using Json = nlohmann::json;

namespace io {

static_assert(std::endian::native == std::endian::little, "exports assume a little-endian host");

inline Json grid_meta(const VoxelDomain& d) {
    return {{"shape", {d.shape()[0], d.shape()[1], d.shape()[2]}},
            {"h", d.h()},
            {"origin", {d.origin()[0], d.origin()[1], d.origin()[2]}},
            {"order", "row-major, last axis fastest"}};
}

inline void write_bytes(const std::filesystem::path& p, const void* data, std::size_t n) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot open " + p.string() + " for writing");
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!os) throw Error("write failed: " + p.string());
}

inline void write_json(const std::filesystem::path& p, const Json& j) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw Error("cannot open " + p.string() + " for writing");
    os << j.dump(2) << '\n';
}

inline Json read_json(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw DataError("cannot open " + p.string());
    try {
        return Json::parse(is);
    } catch (const Json::exception& e) {
        throw DataError("malformed metadata in " + p.string() + ": " + e.what());
    }
}

inline std::vector<double> read_doubles(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary | std::ios::ate);
    if (!is) throw DataError("cannot open " + p.string());
    const auto size = static_cast<std::size_t>(is.tellg());
    if (size % sizeof(double) != 0) throw DataError("file size is not a multiple of 8 bytes: " + p.string());
    std::vector<double> v(size / sizeof(double));
    is.seekg(0);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(size));
    return v;
}

inline std::filesystem::path bin_path(const std::filesystem::path& stem) { return stem.string() + ".bin"; }
inline std::filesystem::path meta_path(const std::filesystem::path& stem) { return stem.string() + ".json"; }

}  // namespace io

/// One byte per cell (1 = included).
inline void write_mask(const std::filesystem::path& stem, const VoxelDomain& d) {
    io::write_bytes(io::bin_path(stem), d.mask().data(), d.mask().size());
    Json meta = io::grid_meta(d);
    meta["kind"] = "mask";
    meta["dtype"] = "uint8";
    meta["volume"] = d.volume();
    io::write_json(io::meta_path(stem), meta);
}

inline std::vector<std::uint8_t> read_mask(const std::filesystem::path& stem) {
    std::ifstream is(io::bin_path(stem), std::ios::binary);
    if (!is) throw DataError("cannot open " + io::bin_path(stem).string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Four values per cell: u0, u1, u2, p.
inline void write_field(const std::filesystem::path& stem, const Field& f, const SolveReport* report = nullptr) {
    const auto& d = f.disc().domain();
    std::vector<double> out(static_cast<std::size_t>(d.cell_count()) * 4, 0.0);
    for (int c : d.included_cells()) {
        const Vec3 u = f.velocity(c);
        for (int i = 0; i < 3; ++i) out[4 * c + i] = u[i];
        out[4 * c + 3] = f.pressure(c);
    }
    io::write_bytes(io::bin_path(stem), out.data(), out.size() * sizeof(double));
    Json meta = io::grid_meta(d);
    meta["kind"] = "field";
    meta["dtype"] = "float64";
    meta["components"] = {"u0", "u1", "u2", "p"};
    if (report) {
        meta["solver"] = {{"method", report->method},
                          {"iterations", report->iterations},
                          {"relative_residual", report->relative_residual}};
    }
    io::write_json(io::meta_path(stem), meta);
}

/// Twelve values per cell: G[i][k] row-major (9), then Pi[k] (3).
inline std::vector<double> green_values(const GreenApprox& g) {
    const auto& d = g.domain();
    std::vector<double> out(static_cast<std::size_t>(d.cell_count()) * 12, 0.0);
    for (int c : d.included_cells()) {
        const Mat3 G = g.G(c);
        const Vec3 P = g.Pi(c);
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) out[12 * c + 3 * i + k] = G[i][k];
        for (int k = 0; k < 3; ++k) out[12 * c + 9 + k] = P[k];
    }
    return out;
}

inline void write_green(const std::filesystem::path& stem, const GreenApprox& g, const Json& coefficients) {
    const auto v = green_values(g);
    io::write_bytes(io::bin_path(stem), v.data(), v.size() * sizeof(double));
    Json meta = io::grid_meta(g.domain());
    meta["kind"] = "green";
    meta["dtype"] = "float64";
    meta["values_per_cell"] = 12;
    meta["layout"] = "G[i][k] row-major, then Pi[k]";
    meta["pole_requested"] = {g.mollifier().requested[0], g.mollifier().requested[1], g.mollifier().requested[2]};
    meta["pole"] = {g.pole()[0], g.pole()[1], g.pole()[2]};
    meta["snap_distance"] = g.mollifier().snap_distance;
    meta["epsilon"] = g.epsilon();
    meta["coefficients"] = coefficients;
    Json cols = Json::array();
    for (int k = 0; k < 3; ++k)
        cols.push_back({{"column", k + 1},
                        {"method", g.report(k).method},
                        {"iterations", g.report(k).iterations},
                        {"relative_residual", g.report(k).relative_residual},
                        {"divergence_residual", g.report(k).divergence_residual}});
    meta["solver"] = cols;
    io::write_json(io::meta_path(stem), meta);
}

/// 81 values per cell in tensor_index order; the sidecar carries shape, h and lambda.
inline void write_coefficient_file(const std::filesystem::path& stem, const VoxelDomain& d,
                                   const CoefficientField& field) {
    std::vector<double> out(static_cast<std::size_t>(d.cell_count()) * 81, 0.0);
    for (int c = 0; c < d.cell_count(); ++c) {
        const Tensor& t = field.at_cell(c);
        std::copy(t.begin(), t.end(), out.begin() + 81 * static_cast<std::ptrdiff_t>(c));
    }
    io::write_bytes(io::bin_path(stem), out.data(), out.size() * sizeof(double));
    Json meta = io::grid_meta(d);
    meta["kind"] = "coefficients";
    meta["dtype"] = "float64";
    meta["lambda"] = field.lambda();
    io::write_json(io::meta_path(stem), meta);
}

inline CoefficientField read_coefficient_file(const std::filesystem::path& stem, const VoxelDomain& d) {
    const Json meta = io::read_json(io::meta_path(stem));
    try {
        const auto shape = meta.at("shape").get<std::array<int, 3>>();
        const double h = meta.at("h").get<double>();
        const double lambda = meta.at("lambda").get<double>();
        if (shape != d.shape() || std::abs(h - d.h()) > 1e-12 * d.h())
            throw ShapeMismatchError("coefficient file grid does not match the domain");
        const auto v = io::read_doubles(io::bin_path(stem));
        if (v.size() != static_cast<std::size_t>(d.cell_count()) * 81)
            throw DataError("coefficient file has the wrong number of values");
        std::vector<Tensor> cells(static_cast<std::size_t>(d.cell_count()));
        for (std::size_t c = 0; c < cells.size(); ++c) std::copy_n(v.begin() + 81 * static_cast<std::ptrdiff_t>(c), 81, cells[c].begin());
        return CoefficientField::from_cells(GridSpec::of(d), cells, lambda);
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed coefficient metadata: ") + e.what());
    }
}

}  // namespace sgreen
