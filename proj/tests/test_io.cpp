#include <gtest/gtest.h>

#include <filesystem>

#include "stokes_green/io.hpp"

using namespace sgreen;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("sgreen_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Io, MaskRoundTrip) {
    const auto d = build_l_shape({1.0, 1.0, 1.0}, {0.5, 0.5, 0.0}, {1.0, 1.0, 1.0}, 0.25);
    const auto dir = tmpdir("mask");
    write_mask(dir / "mask", d);
    const auto m = read_mask(dir / "mask");
    ASSERT_EQ(m.size(), static_cast<std::size_t>(d.cell_count()));
    for (int c = 0; c < d.cell_count(); ++c) EXPECT_EQ(m[c] != 0, d.included(c));
    const auto meta = io::read_json(io::meta_path(dir / "mask"));
    EXPECT_EQ((meta.at("shape").get<std::array<int, 3>>()), d.shape());
    EXPECT_DOUBLE_EQ(meta.at("h").get<double>(), 0.25);
}

TEST(Io, GreenExportMatchesInMemoryValues) {
    const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / 8);
    const auto g = compute_green(d, constant_identity(), {0.5, 0.5, 0.5}, 0.25);
    const auto dir = tmpdir("green");
    write_green(dir / "g", g, Json{{"kind", "identity"}});
    const auto v = io::read_doubles(io::bin_path(dir / "g"));
    ASSERT_EQ(v.size(), static_cast<std::size_t>(d.cell_count()) * 12);
    const int c = d.locate({0.8, 0.3, 0.6}).value();
    const Mat3 G = g.G(c);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) EXPECT_EQ(v[12 * c + 3 * i + k], G[i][k]);
    EXPECT_EQ(v[12 * c + 10], g.Pi(c)[1]);
    const auto meta = io::read_json(io::meta_path(dir / "g"));
    for (const char* key : {"shape", "h", "origin", "order", "kind", "dtype", "values_per_cell", "layout", "pole",
                            "pole_requested", "snap_distance", "epsilon", "coefficients", "solver"})
        EXPECT_TRUE(meta.contains(key)) << key;
    EXPECT_EQ(meta.at("solver").size(), 3u);
}

TEST(Io, FieldExportCarriesSolverReport) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.25);
    auto disc = std::make_shared<const Discretization>(d);
    Vector x = Vector::LinSpaced(4 * disc->node_count(), 0.0, 1.0);
    SolveReport rep;
    rep.method = "minres";
    rep.iterations = 7;
    const auto dir = tmpdir("field");
    write_field(dir / "f", Field(disc, x), &rep);
    EXPECT_EQ(io::read_doubles(io::bin_path(dir / "f")).size(), static_cast<std::size_t>(d.cell_count()) * 4);
    const auto meta = io::read_json(io::meta_path(dir / "f"));
    EXPECT_EQ(meta.at("solver").at("iterations").get<int>(), 7);
    EXPECT_EQ(meta.at("components").size(), 4u);
}

TEST(Io, CoefficientFileRoundTrip) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.25);
    std::vector<Tensor> cells(static_cast<std::size_t>(d.cell_count()));
    for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = identity_tensor(1.0 + 0.01 * static_cast<double>(c));
    const auto field = CoefficientField::from_cells(GridSpec::of(d), cells, 0.5);
    const auto dir = tmpdir("coef");
    write_coefficient_file(dir / "k", d, field);
    const auto back = read_coefficient_file(dir / "k", d);
    EXPECT_DOUBLE_EQ(back.lambda(), 0.5);
    for (int c = 0; c < d.cell_count(); ++c) EXPECT_EQ(back.at_cell(c), field.at_cell(c));
    EXPECT_THROW(read_coefficient_file(dir / "k", build_box({1.0, 1.0, 1.0}, 0.5)), ShapeMismatchError);
    EXPECT_THROW(read_coefficient_file(dir / "missing", d), DataError);
}

TEST(Io, RejectsMalformedFiles) {
    const auto dir = tmpdir("bad");
    {
        std::ofstream(dir / "x.json") << "{not json";
        std::ofstream(dir / "x.bin", std::ios::binary) << "abc";
    }
    EXPECT_THROW(io::read_json(dir / "x.json"), DataError);
    EXPECT_THROW(io::read_doubles(dir / "x.bin"), DataError);
    EXPECT_THROW(read_mask(dir / "none"), DataError);
}
