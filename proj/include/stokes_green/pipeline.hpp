#pragma once

// Config-driven experiment runner: domain -> coefficients -> Green functions
// -> estimate reports, with exports and a manifest of every stage.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stokes_green/config.hpp"
#include "stokes_green/estimates.hpp"
#include "stokes_green/green.hpp"
#include "stokes_green/io.hpp"
#include "stokes_green/protocol.hpp"
#include "stokes_green/system.hpp"

namespace sgreen {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kPass = 0, kEstimateFailure = 1, kConfigError = 2, kSolverFailure = 3 };

/// Exit code for an exception escaping a stage.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IterativeFailure*>(&e)) return kSolverFailure;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const GeometryError*>(&e) || dynamic_cast<const ParameterError*>(&e) ||
        dynamic_cast<const ResolutionError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
        dynamic_cast<const ShapeMismatchError*>(&e) || dynamic_cast<const SeparationError*>(&e) ||
        dynamic_cast<const CompatibilityError*>(&e) || dynamic_cast<const DataError*>(&e))
        return kConfigError;
    return kSolverFailure;
}

/// 64-bit FNV-1a, printed as hex.
inline std::string digest(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

inline Json versions() {
    return {{"stokes_green", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"cplusplus", static_cast<long>(__cplusplus)}};
}

struct RunResult {
    int exit_code = kPass;
    std::string status;  // passed, failed, skipped
    std::vector<EstimateReport> reports;
    Json manifest;
};

/// Runs stages in order, timing each; the first exception stops the run and
/// is recorded with the stage name.
class StageLog {
  public:
    explicit StageLog(std::ostream* log) : log_(log) {}

    bool run(const std::string& name, const std::function<void()>& fn) {
        if (failed_) return false;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const std::exception& e) {
            failed_ = true;
            failing_stage_ = name;
            error_ = e.what();
            code_ = exit_code_for(e);
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        stages_.push_back({{"name", name}, {"seconds", s}, {"status", failed_ ? "failed" : "ok"}});
        if (log_) *log_ << "[" << (failed_ ? "fail" : " ok ") << "] " << name << " (" << s << " s)"
                        << (failed_ ? ": " + error_ : "") << '\n';
        return !failed_;
    }

    void fail(const std::string& name, const std::exception& e) {
        failed_ = true;
        failing_stage_ = name;
        error_ = e.what();
        code_ = exit_code_for(e);
        stages_.push_back({{"name", name}, {"seconds", 0.0}, {"status", "failed"}});
        if (log_) *log_ << "[fail] " << name << ": " << error_ << '\n';
    }

    bool failed() const { return failed_; }
    int code() const { return code_; }
    const std::string& failing_stage() const { return failing_stage_; }
    const std::string& error() const { return error_; }
    const Json& stages() const { return stages_; }

  private:
    std::ostream* log_;
    bool failed_ = false;
    int code_ = kPass;
    std::string failing_stage_;
    std::string error_;
    Json stages_ = Json::array();
};

inline bool selected(const ExperimentConfig& c, const std::string& id) {
    return std::find(c.estimates.begin(), c.estimates.end(), id) != c.estimates.end();
}

inline bool selected_prefix(const ExperimentConfig& c, const std::string& prefix) {
    return std::any_of(c.estimates.begin(), c.estimates.end(),
                       [&](const std::string& id) { return id.rfind(prefix, 0) == 0; });
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw Error("cannot open " + p.string() + " for writing");
    os << s;
}

inline void write_reports(const std::filesystem::path& out, const std::vector<EstimateReport>& reports) {
    std::string text, csv = csv_header();
    for (const auto& r : reports) {
        text += to_text(r) + '\n';
        csv += to_csv_row(r);
    }
    write_text(out / "reports.txt", text);
    write_text(out / "estimates.csv", csv);
}

/// Everything the runner builds before any estimate is measured.
struct Experiment {
    ExperimentConfig config;
    std::optional<VoxelDomain> domain;
    std::optional<CoefficientField> coefficients;
    std::optional<Frame> frame;
    std::shared_ptr<const SaddleOperator> op;
    std::shared_ptr<const SaddleOperator> adjoint_op;

    std::shared_ptr<const SaddleOperator> adjoint() {
        if (!adjoint_op) {
            adjoint_op = coefficients->is_self_adjoint()
                             ? op
                             : std::make_shared<const SaddleOperator>(op->disc_ptr(), adjoint_field(*coefficients),
                                                                      op->options());
        }
        return adjoint_op;
    }
    SolveOptions solve_options() const {
        SolveOptions so;
        so.tol = config.tol;
        so.max_iter = config.max_iter;
        return so;
    }
};

/// Domain, coefficients and the ellipticity audit.
inline void setup_experiment(Experiment& ex) {
    const auto& c = ex.config;
    ex.domain.emplace(build_domain(c.domain));
    ex.frame.emplace(build_frame(c.frame));
    ex.coefficients.emplace(build_coefficients(c.coefficients, *ex.domain, *ex.frame));
    const auto ell = validate_ellipticity(*ex.coefficients, 256, c.seed);
    if (!ell.pass) throw ValidationError("coefficients violate the ellipticity bounds");
    if (!c.auto_poles)
        for (const auto& p : c.poles)
            if (!ex.domain->contains(p)) throw DomainError("pole " + detail::fmt(p) + " lies outside the domain");
}

inline void build_operator(Experiment& ex) {
    auto disc = std::make_shared<const Discretization>(*ex.domain);
    ex.op = std::make_shared<const SaddleOperator>(disc, *ex.coefficients, OperatorOptions{ex.config.stabilization});
}

/// Interior pole (largest distance to the boundary) and boundary pole (smallest).
inline std::pair<Vec3, Vec3> choose_poles(const ExperimentConfig& c, const VoxelDomain& d) {
    if (c.auto_poles) return {protocol::interior_pole(d), protocol::boundary_pole(d)};
    Vec3 in = c.poles.front(), bd = c.poles.front();
    for (const auto& p : c.poles) {
        if (dist_to_boundary(d, p) > dist_to_boundary(d, in)) in = p;
        if (dist_to_boundary(d, p) < dist_to_boundary(d, bd)) bd = p;
    }
    return {in, bd};
}

inline int operators_needed(const ExperimentConfig& c, const CoefficientField& k) {
    const bool adj = selected(c, "symmetry") || selected(c, "representation");
    return 1 + ((adj && !k.is_self_adjoint()) ? 1 : 0);
}

/// Executes a validated config and writes everything under `out`.
inline RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out,
                                std::ostream* log = &std::cerr) {
    namespace fs = std::filesystem;
    RunResult result;
    Experiment ex;
    ex.config = config;
    const Json resolved = to_json(config);
    StageLog stages(log);
    std::vector<EstimateReport>& reports = result.reports;
    std::list<std::pair<std::string, GreenApprox>> greens;  // stable addresses
    Json exports = Json::array();
    bool skipped = false;
    double required_mb = 0.0;
    fs::create_directories(out);

    auto add = [&](auto&& rs) {
        for (auto& r : rs) reports.push_back(std::move(r));
    };
    auto green_named = [&](const std::string& name) -> const GreenApprox* {
        for (const auto& [n, g] : greens)
            if (n == name) return &g;
        return nullptr;
    };
    auto solve_green = [&](const std::string& name, std::shared_ptr<const SaddleOperator> op, const Vec3& y,
                           double eps) -> const GreenApprox& {
        auto g = compute_green(std::move(op), y, eps, ex.solve_options(), config.workers);
        if (config.tamper_scale != 1.0) g = g.with_scaled_velocity(config.tamper_scale);
        for (int k = 0; k < 3; ++k)
            write_text(out / "solve" / (name + "_col" + std::to_string(k + 1) + ".txt"), to_text(g.report(k)));
        greens.emplace_back(name, std::move(g));
        return greens.back().second;
    };

    const bool any = !config.estimates.empty();
    stages.run("setup", [&] {
        setup_experiment(ex);
        required_mb = protocol::memory_required_mb(protocol::node_count(ex.domain->shape()),
                                                   operators_needed(config, *ex.coefficients),
                                                   static_cast<int>(config.epsilon_h.size()) + 6);
        if (any && required_mb > config.memory_budget_mb) skipped = true;
    });

    const bool work = any && !skipped && !stages.failed();
    if (work) {
        stages.run("export:mask", [&] {
            write_mask(out / "mask", *ex.domain);
            exports.push_back("mask");
        });
        stages.run("operator", [&] { build_operator(ex); });
    }

    const double h = work ? ex.domain->h() : 0.0;
    const double eps = work ? protocol::main_epsilon(config.epsilon_h, h) : 0.0;
    const bool t1 = selected_prefix(config, "T1-"), t2 = selected_prefix(config, "T2-");
    const bool need_interior = t1 || selected(config, "decay") || selected(config, "representation");
    Vec3 y_in{}, y_bd{};
    if (work && !stages.failed()) std::tie(y_in, y_bd) = choose_poles(config, *ex.domain);
    const bool distinct_boundary = work && norm(y_in - y_bd) > 0.0;

    if (work && need_interior)
        stages.run("green:interior", [&] { solve_green("green_interior", ex.op, y_in, eps); });
    if (work && (t2 || (selected(config, "decay") && distinct_boundary)))
        stages.run("green:boundary", [&] { solve_green("green_boundary", ex.op, y_bd, eps); });
    const bool sweep = work && (t1 || t2 || selected(config, "decay")) && config.epsilon_h.size() > 1;
    if (sweep)
        stages.run("green:energy_sweep", [&] {
            for (std::size_t i = 0; i + 1 < config.epsilon_h.size(); ++i)
                solve_green("green_sweep_" + detail::fmt(config.epsilon_h[i]) + "h", ex.op, y_in, config.epsilon_h[i] * h);
        });

    if (work && !stages.failed()) {
        const auto* gi = green_named("green_interior");
        const auto* gb = green_named("green_boundary");
        if (selected(config, "decay"))
            stages.run("estimates:decay", [&] {
                reports.push_back(protocol::decay_report(*gi, true, config.policy, "decay-interior"));
                if (gb) reports.push_back(protocol::decay_report(*gb, false, config.policy, "decay-boundary"));
            });
        if (t1)
            stages.run("estimates:T1", [&] {
                add(protocol::pole_reports(*gi, config.R0, true, config.policy, "T1", config.estimates));
            });
        if (t2)
            stages.run("estimates:T2", [&] {
                add(protocol::pole_reports(*gb, config.R0, false, config.policy, "T2", config.estimates));
            });
        if (sweep)
            stages.run("estimates:energy", [&] {
                std::vector<const GreenApprox*> s;
                for (std::size_t i = 0; i + 1 < config.epsilon_h.size(); ++i)
                    s.push_back(green_named("green_sweep_" + detail::fmt(config.epsilon_h[i]) + "h"));
                s.push_back(gi);
                reports.push_back(protocol::energy_report(s, config.policy));
            });
        if (selected(config, "symmetry"))
            stages.run("estimates:symmetry", [&] {
                const auto pp = protocol::symmetry_poles(*ex.domain);
                const double es = std::max(4.0 * h, eps);
                const auto& direct = solve_green("green_symmetry_y", ex.op, pp.y, es);
                const auto& adj = solve_green("green_symmetry_x_adjoint", ex.adjoint(), pp.x, es);
                reports.push_back(
                    protocol::pair_report("symmetry", symmetry_check(direct, adj), direct, adj, config.policy));
                reports.push_back(protocol::pair_report("averaging", averaging_identity_check(direct, adj), direct, adj,
                                                        config.policy));
            });
        if (selected(config, "representation"))
            stages.run("estimates:representation", [&] {
                const auto rp = protocol::representation_pair(*green_named("green_interior"), ex.adjoint(),
                                                              ex.solve_options());
                reports.push_back(
                    protocol::representation_report(rp, *green_named("green_interior"), config.tol, config.policy));
            });
        if (selected(config, "caccioppoli"))
            stages.run("estimates:caccioppoli", [&] {
                const auto setup = protocol::caccioppoli_setup(*ex.domain);
                const auto& g = solve_green("green_caccioppoli", ex.op, setup.pole, eps);
                add(protocol::caccioppoli_reports(g, setup, config.R0, config.policy));
            });
        if (selected(config, "bogovskii"))
            stages.run("estimates:bogovskii", [&] {
                std::vector<double> hs, qs, res;
                for (double f : {4.0, 2.0, 1.0}) {
                    const auto d = build_domain(config.domain, h * f);
                    const auto sol = solve_divergence(d, protocol::half_box_pattern(d), 1e-10, config.max_iter);
                    hs.push_back(d.h());
                    qs.push_back(sol.quotient);
                    res.push_back(sol.residual);
                }
                reports.push_back(protocol::bogovskii_report(hs, qs, res, config.policy));
            });
        if (selected(config, "oscillation"))
            stages.run("estimates:oscillation", [&] {
                const bool layered = config.coefficients["kind"] == "layered";
                reports.push_back(protocol::oscillation_report(*ex.coefficients, *ex.frame, *ex.domain, layered));
            });
        if (selected(config, "poincare"))
            stages.run("estimates:poincare", [&] { reports.push_back(protocol::poincare_report(*ex.domain, config.seed)); });
        if (!greens.empty())
            stages.run("estimates:invariants", [&] {
                std::vector<std::pair<std::string, const GreenApprox*>> all;
                for (const auto& [n, g] : greens) all.emplace_back(n, &g);
                reports.push_back(protocol::invariants_report(all));
            });
    }

    // Exports and reports are written even after a failure, from whatever exists.
    {
        const bool was_failed = stages.failed();
        try {
            for (const auto& name : {"green_interior", "green_boundary"})
                if (const auto* g = green_named(name)) {
                    write_green(out / name, *g, config.coefficients);
                    exports.push_back(name);
                }
            if (!reports.empty()) write_reports(out, reports);
        } catch (const std::exception& e) {
            if (!was_failed) stages.fail("export", e);
        }
    }

    bool all_pass = true;
    for (const auto& r : reports) all_pass = all_pass && r.pass;
    if (stages.failed()) {
        result.exit_code = stages.code();
        result.status = "failed";
    } else if (skipped) {
        result.status = "skipped";
        result.exit_code = kPass;
    } else {
        result.status = all_pass ? "passed" : "failed";
        result.exit_code = all_pass ? kPass : kEstimateFailure;
    }

    Json rep_list = Json::array();
    for (const auto& r : reports) rep_list.push_back({{"id", r.id}, {"pass", r.pass}});
    result.manifest = {{"status", result.status},
                       {"exit_code", result.exit_code},
                       {"config_digest", digest(resolved.dump())},
                       {"config", resolved},
                       {"versions", versions()},
                       {"stages", stages.stages()},
                       {"memory_required_mb", required_mb},
                       {"exports", exports},
                       {"reports", rep_list}};
    if (skipped)
        result.manifest["skip_reason"] = "memory budget " + detail::fmt(config.memory_budget_mb) + " MB is below the " +
                                         detail::fmt(required_mb) + " MB this grid needs";
    if (stages.failed()) {
        result.manifest["failing_stage"] = stages.failing_stage();
        result.manifest["error"] = stages.error();
    }
    io::write_json(out / "manifest.json", result.manifest);
    return result;
}

/// Writes mask, coefficients, and per-pole Green and column field exports.
inline RunResult export_experiment(const ExperimentConfig& config, const std::filesystem::path& out,
                                   std::ostream* log = &std::cerr) {
    RunResult result;
    Experiment ex;
    ex.config = config;
    StageLog stages(log);
    Json exports = Json::array();
    std::filesystem::create_directories(out);
    stages.run("setup", [&] { setup_experiment(ex); });
    stages.run("export:mask", [&] {
        write_mask(out / "mask", *ex.domain);
        write_coefficient_file(out / "coefficients", *ex.domain, *ex.coefficients);
        exports.push_back("mask");
        exports.push_back("coefficients");
    });
    stages.run("operator", [&] { build_operator(ex); });
    stages.run("green", [&] {
        const auto [y_in, y_bd] = choose_poles(config, *ex.domain);
        std::vector<Vec3> poles = config.auto_poles ? std::vector<Vec3>{y_in, y_bd} : config.poles;
        const double eps = protocol::main_epsilon(config.epsilon_h, ex.domain->h());
        for (std::size_t i = 0; i < poles.size(); ++i) {
            auto g = compute_green(ex.op, poles[i], eps, ex.solve_options(), config.workers);
            if (config.tamper_scale != 1.0) g = g.with_scaled_velocity(config.tamper_scale);
            const std::string stem = "green_pole" + std::to_string(i);
            write_green(out / stem, g, config.coefficients);
            exports.push_back(stem);
            for (int k = 0; k < 3; ++k) {
                const std::string fs = stem + "_col" + std::to_string(k + 1);
                write_field(out / fs, g.column(k), &g.report(k));
                exports.push_back(fs);
            }
        }
    });
    result.exit_code = stages.failed() ? stages.code() : kPass;
    result.status = stages.failed() ? "failed" : "passed";
    result.manifest = {{"status", result.status},
                       {"exit_code", result.exit_code},
                       {"config_digest", digest(to_json(config).dump())},
                       {"config", to_json(config)},
                       {"versions", versions()},
                       {"stages", stages.stages()},
                       {"exports", exports}};
    if (stages.failed()) {
        result.manifest["failing_stage"] = stages.failing_stage();
        result.manifest["error"] = stages.error();
    }
    io::write_json(out / "manifest.json", result.manifest);
    return result;
}

}  // namespace sgreen
