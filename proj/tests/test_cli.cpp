#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path tmpdir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("sgreen_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
    const auto p = dir / "config.json";
    std::ofstream(p) << body;
    return p;
}

nlohmann::json manifest(const fs::path& out) {
    std::ifstream is(out / "manifest.json");
    return nlohmann::json::parse(is);
}

const char* kSmall = R"({"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.0625},
  "poles": [[0.5, 0.5, 0.5]], "epsilon_h": [2], "estimates": ["T1-viii"]})";

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("run --preset enormous"), 2);
    EXPECT_EQ(run("run --workers 0"), 2);
    EXPECT_EQ(run("run --help"), 0);
}

TEST(Cli, ConfigErrorsExitTwo) {
    const auto dir = tmpdir("bad");
    EXPECT_EQ(run("run --config " + (dir / "missing.json").string()), 2);
    EXPECT_EQ(run("run --config " + write_config(dir, "{\"estimates\": [\"T7-x\"]}").string()), 2);
    EXPECT_EQ(run("run --config " + write_config(dir, "{oops").string()), 2);
    EXPECT_EQ(run("export --config " + write_config(dir, "{\"domain\": {\"kind\": \"box\", \"extent\": [1,1,1], "
                                                         "\"h\": 0.3}}").string() +
                  " --out " + (dir / "o").string()),
              2);
}

TEST(Cli, RunWritesArtifactsAndMatchingExitCode) {
    const auto dir = tmpdir("run");
    const auto out = dir / "out";
    const int code = run("run --config " + write_config(dir, kSmall).string() + " --out " + out.string());
    ASSERT_TRUE(code == 0 || code == 1) << code;
    const auto m = manifest(out);
    EXPECT_EQ(m.at("exit_code").get<int>(), code);
    bool all = true;
    for (const auto& r : m.at("reports")) all = all && r.at("pass").get<bool>();
    EXPECT_EQ(code, all ? 0 : 1);
    EXPECT_TRUE(fs::exists(out / "estimates.csv"));
    EXPECT_TRUE(fs::exists(out / "reports.txt"));
    EXPECT_TRUE(fs::exists(out / "green_interior.bin"));
}

TEST(Cli, TamperedRunFails) {
    const auto dir = tmpdir("tamper");
    EXPECT_EQ(run("run --config " + write_config(dir, kSmall).string() + " --out " + (dir / "clean").string()), 0);
    std::string body = kSmall;
    body.insert(body.rfind('}'), R"(, "tamper": {"scale_G": 2.0})");
    EXPECT_EQ(run("run --config " + write_config(dir, body).string() + " --out " + (dir / "o").string()), 1);
}

TEST(Cli, SolverBudgetExitsThree) {
    const auto dir = tmpdir("budget");
    std::string body = kSmall;
    body.insert(body.rfind('}'), R"(, "solver": {"max_iter": 2})");
    EXPECT_EQ(run("run --config " + write_config(dir, body).string() + " --out " + (dir / "o").string()), 3);
}

TEST(Cli, ExportWritesSidecars) {
    const auto dir = tmpdir("export");
    const auto out = dir / "out";
    EXPECT_EQ(run("export --config " + write_config(dir, kSmall).string() + " --out " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "green_pole0.bin"));
    EXPECT_TRUE(fs::exists(out / "green_pole0.json"));
    EXPECT_EQ(manifest(out).at("status"), "passed");
}

TEST(Cli, VerifySkipsUnderMemoryBudget) {
    const auto dir = tmpdir("verify");
    const auto out = dir / "out";
    const auto cfg = write_config(dir, R"({"memory_budget_mb": 1})");
    EXPECT_EQ(run("verify --config " + cfg.string() + " --out " + out.string()), 0);
    EXPECT_EQ(manifest(out).at("status"), "skipped");
}
