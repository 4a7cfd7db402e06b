#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "stokes_green/pipeline.hpp"

using namespace sgreen;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("sgreen_cfg_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Json small_config() {
    return {{"domain", {{"kind", "box"}, {"extent", {1.0, 1.0, 1.0}}, {"h", 0.125}}},
            {"coefficients", {{"kind", "identity"}}},
            {"poles", {{0.5, 0.5, 0.5}}},
            {"epsilon_h", {2.0}},
            {"estimates", {"T1-vi"}}};
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    const auto c = parse_config(Json::object());
    EXPECT_TRUE(c.auto_poles);
    EXPECT_EQ(c.epsilon_h, (std::vector<double>{8, 6, 4, 2}));
    EXPECT_DOUBLE_EQ(c.tol, 1e-9);
    EXPECT_TRUE(c.estimates.empty());
    const auto again = parse_config(to_json(c));
    EXPECT_EQ(to_json(again), to_json(c));
}

TEST(Config, AcceptsEveryKnownId) {
    Json j = Json::object();
    j["estimates"] = known_estimates();
    EXPECT_EQ(parse_config(j).estimates.size(), known_estimates().size());
}

TEST(Config, ExampleConfigsParseAndBuild) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(EXAMPLES_DIR)) {
        ++n;
        const auto c = load_config(e.path());
        const auto d = build_domain(c.domain);
        EXPECT_NO_THROW(build_coefficients(c.coefficients, d, build_frame(c.frame))) << e.path().filename();
        for (const auto& p : c.poles) EXPECT_TRUE(d.locate(p).has_value()) << e.path().filename();
    }
    EXPECT_GE(n, 3);
}

TEST(Config, PresetsParse) {
    for (const char* p : {"smoke", "standard", "deep"}) {
        const auto c = parse_config(preset_config(p));
        EXPECT_DOUBLE_EQ(c.domain.at("h").get<double>(), 1.0 / *preset_cells(p));
    }
    EXPECT_THROW(preset_config("huge"), ConfigError);
}

TEST(Config, MalformedCorpusIsRejectedCleanly) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(CORPUS_DIR)) {
        ++n;
        EXPECT_THROW(load_config(e.path()), ConfigError) << e.path().filename();
    }
    EXPECT_GE(n, 30);
    EXPECT_THROW(load_config(fs::path(CORPUS_DIR) / "does_not_exist.json"), ConfigError);
}

// Random type substitutions anywhere in a valid document: parsing either
// succeeds or throws ConfigError, never anything else.
TEST(Config, PropertyMutationsFailAsConfigErrors) {
    std::mt19937_64 rng(11);
    const std::vector<Json> junk = {nullptr, -1, 0, 2.5, 1e300, "x", true, Json::array(), Json::object(),
                                    Json::array({1, "a"}), -9223372036854775807LL};
    Json base = small_config();
    base["frame"] = {{"axis", 1}};
    base["solver"] = {{"tol", 1e-8}, {"max_iter", 100}};
    base["policy"] = {{"slope_window", 0.3}};
    const auto flat = base.flatten();
    std::vector<std::string> paths;
    for (const auto& [k, v] : flat.items()) {
        (void)v;
        paths.push_back(k);
    }
    int accepted = 0;
    for (int trial = 0; trial < 400; ++trial) {
        auto f = flat;
        f[paths[rng() % paths.size()]] = junk[rng() % junk.size()];
        Json doc;
        try {
            doc = f.unflatten();
        } catch (const Json::exception&) {
            continue;
        }
        try {
            parse_config(doc);
            ++accepted;
        } catch (const ConfigError&) {
        } catch (const std::exception& e) {
            ADD_FAILURE() << "unexpected exception: " << e.what() << " for " << doc.dump();
        }
    }
    EXPECT_LT(accepted, 400);
}

TEST(Config, BuildErrorsMapToConfigExitCode) {
    Json j = small_config();
    j["domain"]["h"] = 0.3;
    const auto r = run_experiment(parse_config(j), tmpdir("nondividing"), nullptr);
    EXPECT_EQ(r.exit_code, kConfigError);
    EXPECT_EQ(r.manifest.at("failing_stage"), "setup");
    j = small_config();
    j["poles"] = {{2.0, 0.5, 0.5}};
    EXPECT_EQ(run_experiment(parse_config(j), tmpdir("outside"), nullptr).exit_code, kConfigError);
}

TEST(Config, ExitCodeMapping) {
    EXPECT_EQ(exit_code_for(ConfigError("x")), kConfigError);
    EXPECT_EQ(exit_code_for(ResolutionError("x")), kConfigError);
    EXPECT_EQ(exit_code_for(IterativeFailure("x", 1.0)), kSolverFailure);
    EXPECT_EQ(exit_code_for(std::runtime_error("x")), kSolverFailure);
}

TEST(Pipeline, EmptyEstimateListWritesManifestOnly) {
    Json j = small_config();
    j["estimates"] = Json::array();
    const auto out = tmpdir("empty");
    const auto r = run_experiment(parse_config(j), out, nullptr);
    EXPECT_EQ(r.exit_code, kPass);
    EXPECT_TRUE(r.reports.empty());
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
    EXPECT_FALSE(fs::exists(out / "mask.bin"));
}

TEST(Pipeline, MemoryGuardSkips) {
    Json j = small_config();
    j["memory_budget_mb"] = 1.0;
    const auto out = tmpdir("guard");
    const auto r = run_experiment(parse_config(j), out, nullptr);
    EXPECT_EQ(r.exit_code, kPass);
    EXPECT_EQ(r.status, "skipped");
    const auto m = io::read_json(out / "manifest.json");
    EXPECT_EQ(m.at("status"), "skipped");
    EXPECT_TRUE(m.contains("skip_reason"));
}

TEST(Pipeline, RunIsDeterministic) {
    const auto cfg = parse_config(small_config());
    const auto a = tmpdir("det_a"), b = tmpdir("det_b");
    const auto ra = run_experiment(cfg, a, nullptr);
    const auto rb = run_experiment(cfg, b, nullptr);
    EXPECT_EQ(ra.exit_code, rb.exit_code);
    EXPECT_EQ(slurp(a / "estimates.csv"), slurp(b / "estimates.csv"));
    EXPECT_EQ(slurp(a / "reports.txt"), slurp(b / "reports.txt"));
    EXPECT_EQ(io::read_doubles(a / "green_interior.bin"), io::read_doubles(b / "green_interior.bin"));
    EXPECT_EQ(ra.manifest.at("config_digest"), rb.manifest.at("config_digest"));
}

TEST(Pipeline, ReportsMatchCsv) {
    const auto out = tmpdir("csv");
    const auto r = run_experiment(parse_config(small_config()), out, nullptr);
    const auto csv = slurp(out / "estimates.csv");
    EXPECT_EQ(csv.rfind(csv_header(), 0), 0u);
    bool all = true;
    for (const auto& rep : r.reports) {
        EXPECT_NE(csv.find(to_csv_row(rep)), std::string::npos) << rep.id;
        EXPECT_EQ(rep.pass, recompute_pass(rep)) << rep.id;
        all = all && rep.pass;
    }
    EXPECT_EQ(r.exit_code, all ? kPass : kEstimateFailure);
    EXPECT_TRUE(fs::exists(out / "solve" / "green_interior_col1.txt"));
}

TEST(Pipeline, TamperedGreenFunctionFails) {
    Json j = small_config();
    j["tamper"] = {{"scale_G", 2.0}};
    const auto r = run_experiment(parse_config(j), tmpdir("tamper"), nullptr);
    EXPECT_NE(r.exit_code, kPass);
    bool invariants_failed = false;
    for (const auto& rep : r.reports)
        if (rep.id == "invariants") invariants_failed = !rep.pass;
    EXPECT_TRUE(invariants_failed);
}

TEST(Pipeline, SolverBudgetGivesSolverExit) {
    Json j = small_config();
    j["solver"] = {{"max_iter", 2}};
    const auto r = run_experiment(parse_config(j), tmpdir("budget"), nullptr);
    EXPECT_EQ(r.exit_code, kSolverFailure);
}

TEST(Pipeline, ExportWritesFieldsAndSidecars) {
    const auto out = tmpdir("export");
    const auto r = export_experiment(parse_config(small_config()), out, nullptr);
    EXPECT_EQ(r.exit_code, kPass);
    for (const char* stem : {"mask", "coefficients", "green_pole0", "green_pole0_col1"}) {
        EXPECT_TRUE(fs::exists(out / (std::string(stem) + ".bin"))) << stem;
        EXPECT_TRUE(fs::exists(out / (std::string(stem) + ".json"))) << stem;
    }
}
