// stokes-green: run, verify and export experiments from a JSON config.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "stokes_green/acceptance.hpp"
#include "stokes_green/config.hpp"
#include "stokes_green/pipeline.hpp"

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::string preset;
    int workers = 0;
};

/// Config file, else preset, else the built-in defaults; flags override.
sgreen::ExperimentConfig resolve(const Flags& f) {
    sgreen::Json j = sgreen::Json::object();
    if (!f.config.empty()) {
        auto c = sgreen::load_config(f.config);
        j = sgreen::to_json(c);
    } else if (!f.preset.empty()) {
        j = sgreen::preset_config(f.preset);
    }
    auto c = sgreen::parse_config(j);
    if (!f.out.empty()) c.output = f.out;
    if (f.workers > 0) c.workers = f.workers;
    return c;
}

int verify(const Flags& f, const sgreen::ExperimentConfig& c) {
    sgreen::AcceptanceOptions opt;
    if (!f.preset.empty()) {
        opt.n = *sgreen::preset_cells(f.preset);
    } else {
        opt.n = static_cast<int>(std::lround(1.0 / c.domain.at("h").get<double>()));
    }
    opt.coarse = opt.n / 2;
    opt.workers = c.workers;
    opt.tol = c.tol;
    opt.tamper_scale = c.tamper_scale;
    opt.log = &std::cerr;
    const double need = sgreen::protocol::memory_required_mb(sgreen::protocol::node_count({opt.n, opt.n, opt.n}), 1, 12);
    std::filesystem::create_directories(c.output);
    if (need > c.memory_budget_mb) {
        std::cout << "verify skipped: memory budget " << c.memory_budget_mb << " MB is below the " << need
                  << " MB needed at n=" << opt.n << '\n';
        sgreen::io::write_json(std::filesystem::path(c.output) / "manifest.json",
                               {{"status", "skipped"}, {"exit_code", 0}, {"memory_required_mb", need},
                                {"config", sgreen::to_json(c)}, {"versions", sgreen::versions()}});
        return sgreen::kPass;
    }
    const auto results = sgreen::run_acceptance(opt);
    std::string text;
    bool all = true;
    for (const auto& r : results) {
        text += sgreen::to_line(r) + '\n';
        all = all && r.pass;
    }
    std::cout << text;
    sgreen::write_text(std::filesystem::path(c.output) / "acceptance.txt", text);
    sgreen::io::write_json(std::filesystem::path(c.output) / "manifest.json",
                           {{"status", all ? "passed" : "failed"},
                            {"exit_code", all ? 0 : 1},
                            {"n", opt.n},
                            {"config", sgreen::to_json(c)},
                            {"versions", sgreen::versions()}});
    return all ? sgreen::kPass : sgreen::kEstimateFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Approximated Green functions for conormal Stokes systems"};
    app.require_subcommand(1);
    Flags flags;
    auto add_flags = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "experiment config (JSON)");
        sub->add_option("--out", flags.out, "output directory");
        sub->add_option("--workers", flags.workers, "parallel column solves")->check(CLI::PositiveNumber);
        sub->add_option("--preset", flags.preset, "smoke, standard or deep")
            ->check(CLI::IsMember({"smoke", "standard", "deep"}));
    };
    auto* run = app.add_subcommand("run", "run the configured estimates");
    auto* ver = app.add_subcommand("verify", "run the acceptance suite");
    auto* exp = app.add_subcommand("export", "write mask, coefficients and Green exports");
    for (auto* s : {run, ver, exp}) add_flags(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : sgreen::kConfigError;
    }

    sgreen::ExperimentConfig cfg;
    try {
        cfg = resolve(flags);
    } catch (const sgreen::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return sgreen::kConfigError;
    }

    try {
        if (run->parsed()) {
            const auto r = sgreen::run_experiment(cfg, cfg.output);
            std::cout << "status=" << r.status << " exit=" << r.exit_code << " reports=" << r.reports.size() << '\n';
            for (const auto& rep : r.reports) std::cout << rep.id << (rep.pass ? " pass" : " FAIL") << '\n';
            return r.exit_code;
        }
        if (exp->parsed()) {
            const auto r = sgreen::export_experiment(cfg, cfg.output);
            std::cout << "status=" << r.status << " exit=" << r.exit_code << '\n';
            return r.exit_code;
        }
        return verify(flags, cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return sgreen::exit_code_for(e);
    }
}
