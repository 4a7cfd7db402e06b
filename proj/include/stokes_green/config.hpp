#pragma once

// Experiment configuration: a JSON document with every default defined here
// and echoed back into the run manifest.

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stokes_green/coefficients.hpp"
#include "stokes_green/domain.hpp"
#include "stokes_green/estimates.hpp"
#include "stokes_green/io.hpp"

namespace sgreen {

inline const std::vector<std::string>& known_estimates() {
    static const std::vector<std::string> ids = {
        "T1-i",  "T1-ii",  "T1-iii",  "T1-iv",   "T1-v",           "T1-vi",          "T1-vii",   "T1-viii",
        "T2-i",  "T2-ii",  "T2-iii",  "T2-iv",   "T2-v",           "T2-vi",          "T2-vii",   "T2-viii",
        "decay", "symmetry", "representation", "caccioppoli", "oscillation", "bogovskii", "poincare"};
    return ids;
}

struct ExperimentConfig {
    Json domain = {{"kind", "box"}, {"extent", {1.0, 1.0, 1.0}}, {"h", 1.0 / 16}};
    Json coefficients = {{"kind", "identity"}};
    Json frame = {{"axis", 0}};
    bool auto_poles = true;
    std::vector<Vec3> poles;
    std::vector<double> epsilon_h = {8, 6, 4, 2};
    double tol = 1e-9;
    int max_iter = 20000;
    double stabilization = 0.1;
    std::vector<std::string> estimates;
    std::string output = "out";
    std::uint64_t seed = 1;
    double R0 = 1.0;
    int workers = 1;
    double memory_budget_mb = 4096;
    double tamper_scale = 1.0;
    TolerancePolicy policy;
};

namespace detail {

template <typename T>
T get_as(const Json& j, const char* key) {
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!j.contains(key)) throw ConfigError(std::string("field '") + key + "' is required");
        const auto& v = j[key];
        if (v.is_number_unsigned()) {
            if (v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<T>::max()))
                throw ConfigError(std::string("field '") + key + "' is out of range");
            return static_cast<T>(v.get<std::uint64_t>());
        }
        if (v.is_number_integer()) {
            const auto x = v.get<std::int64_t>();
            if (std::cmp_less(x, std::numeric_limits<T>::min()) || std::cmp_greater(x, std::numeric_limits<T>::max()))
                throw ConfigError(std::string("field '") + key + "' is out of range");
            return static_cast<T>(x);
        }
        throw ConfigError(std::string("field '") + key + "' must be an integer");
    }
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
}

inline void only_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
            throw ConfigError(std::string("unknown key '") + k + "' in " + where);
    }
}

inline Vec3 get_vec3(const Json& j, const char* key) {
    const auto v = get_as<std::vector<double>>(j, key);
    if (v.size() != 3) throw ConfigError(std::string("field '") + key + "' needs 3 numbers");
    for (double x : v)
        if (!std::isfinite(x)) throw ConfigError(std::string("field '") + key + "' must be finite");
    return {v[0], v[1], v[2]};
}

inline double positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
    return v;
}

}  // namespace detail

/// Validates the document and fills defaults. Nothing is built here.
inline ExperimentConfig parse_config(const Json& j) {
    ExperimentConfig c;
    detail::only_keys(j,
                      {"domain", "coefficients", "frame", "poles", "epsilon_h", "solver", "estimates", "output", "seed",
                       "R0", "workers", "memory_budget_mb", "tamper", "policy"},
                      "config");
    if (j.contains("domain")) c.domain = j["domain"];
    if (j.contains("coefficients")) c.coefficients = j["coefficients"];
    if (j.contains("frame")) c.frame = j["frame"];
    if (j.contains("poles")) {
        const auto& p = j["poles"];
        if (p.is_string()) {
            if (p.get<std::string>() != "auto") throw ConfigError("poles must be \"auto\" or a list of points");
        } else if (p.is_array()) {
            c.auto_poles = false;
            for (const auto& q : p) {
                if (!q.is_array() || q.size() != 3) throw ConfigError("each pole needs 3 coordinates");
                Vec3 v{};
                for (int a = 0; a < 3; ++a) {
                    if (!q[a].is_number()) throw ConfigError("pole coordinates must be numbers");
                    v[a] = q[a].get<double>();
                }
                c.poles.push_back(v);
            }
            if (c.poles.empty()) throw ConfigError("pole list is empty");
        } else {
            throw ConfigError("poles must be \"auto\" or a list of points");
        }
    }
    if (j.contains("epsilon_h")) {
        c.epsilon_h = detail::get_as<std::vector<double>>(j, "epsilon_h");
        if (c.epsilon_h.empty()) throw ConfigError("epsilon_h must not be empty");
        for (std::size_t i = 0; i < c.epsilon_h.size(); ++i) {
            if (!(c.epsilon_h[i] >= 2.0) || !std::isfinite(c.epsilon_h[i]))
                throw ConfigError("epsilon_h entries must be at least 2 (eps >= 2h)");
            if (i > 0 && c.epsilon_h[i] > c.epsilon_h[i - 1]) throw ConfigError("epsilon_h must be decreasing");
        }
    }
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        detail::only_keys(s, {"tol", "max_iter", "stabilization"}, "solver");
        if (s.contains("tol")) c.tol = detail::positive(detail::get_as<double>(s, "tol"), "solver.tol");
        if (s.contains("max_iter")) {
            c.max_iter = detail::get_as<int>(s, "max_iter");
            if (c.max_iter < 1) throw ConfigError("solver.max_iter must be positive");
        }
        if (s.contains("stabilization"))
            c.stabilization = detail::positive(detail::get_as<double>(s, "stabilization"), "solver.stabilization");
    }
    if (j.contains("estimates")) {
        c.estimates = detail::get_as<std::vector<std::string>>(j, "estimates");
        const auto& known = known_estimates();
        std::set<std::string> seen;
        for (const auto& id : c.estimates) {
            if (std::find(known.begin(), known.end(), id) == known.end())
                throw ConfigError("unknown estimate id '" + id + "'");
            if (!seen.insert(id).second) throw ConfigError("duplicate estimate id '" + id + "'");
        }
    }
    if (j.contains("output")) c.output = detail::get_as<std::string>(j, "output");
    if (j.contains("seed")) c.seed = detail::get_as<std::uint64_t>(j, "seed");
    if (j.contains("R0")) {
        c.R0 = detail::get_as<double>(j, "R0");
        if (!(c.R0 > 0.0 && c.R0 <= 1.0)) throw ConfigError("R0 must lie in (0, 1]");
    }
    if (j.contains("workers")) {
        c.workers = detail::get_as<int>(j, "workers");
        if (c.workers < 1) throw ConfigError("workers must be at least 1");
    }
    if (j.contains("memory_budget_mb"))
        c.memory_budget_mb = detail::positive(detail::get_as<double>(j, "memory_budget_mb"), "memory_budget_mb");
    if (j.contains("tamper")) {
        detail::only_keys(j["tamper"], {"scale_G"}, "tamper");
        if (j["tamper"].contains("scale_G")) {
            c.tamper_scale = detail::get_as<double>(j["tamper"], "scale_G");
            if (!std::isfinite(c.tamper_scale)) throw ConfigError("tamper.scale_G must be finite");
        }
    }
    if (j.contains("policy")) {
        const auto& p = j["policy"];
        detail::only_keys(p,
                          {"slope_window", "lq_window", "envelope_flatness", "energy_flatness", "quotient_stability", "symmetry_max",
                           "bogovskii_variation", "representation_factor", "monotone_slack"},
                          "policy");
        auto set = [&](const char* k, double& dst) {
            if (p.contains(k)) dst = detail::positive(detail::get_as<double>(p, k), k);
        };
        set("slope_window", c.policy.slope_window);
        set("lq_window", c.policy.lq_window);
        set("envelope_flatness", c.policy.envelope_flatness);
        set("energy_flatness", c.policy.energy_flatness);
        set("quotient_stability", c.policy.quotient_stability);
        set("symmetry_max", c.policy.symmetry_max);
        set("bogovskii_variation", c.policy.bogovskii_variation);
        set("representation_factor", c.policy.representation_factor);
        set("monotone_slack", c.policy.monotone_slack);
    }

    // Shape checks on the descriptors; building happens later.
    const auto& d = c.domain;
    if (!d.is_object() || !d.contains("kind") || !d["kind"].is_string()) throw ConfigError("domain.kind is required");
    const auto dk = d["kind"].get<std::string>();
    if (dk == "box") {
        detail::only_keys(d, {"kind", "extent", "h"}, "domain");
        detail::get_vec3(d, "extent");
    } else if (dk == "l_shape") {
        detail::only_keys(d, {"kind", "extent", "notch_lo", "notch_hi", "h"}, "domain");
        detail::get_vec3(d, "extent");
        detail::get_vec3(d, "notch_lo");
        detail::get_vec3(d, "notch_hi");
    } else if (dk == "ball") {
        detail::only_keys(d, {"kind", "radius", "h"}, "domain");
        detail::positive(detail::get_as<double>(d, "radius"), "domain.radius");
    } else {
        throw ConfigError("unknown domain kind '" + dk + "'");
    }
    detail::positive(detail::get_as<double>(d, "h"), "domain.h");

    const auto& k = c.coefficients;
    if (!k.is_object() || !k.contains("kind") || !k["kind"].is_string())
        throw ConfigError("coefficients.kind is required");
    const auto ck = k["kind"].get<std::string>();
    if (ck == "identity") {
        detail::only_keys(k, {"kind"}, "coefficients");
    } else if (ck == "layered") {
        detail::only_keys(k, {"kind", "layers", "lambda"}, "coefficients");
        if (!k.contains("layers") || !k["layers"].is_array() || k["layers"].empty())
            throw ConfigError("layered coefficients need a non-empty 'layers' list");
        for (const auto& l : k["layers"]) {
            detail::only_keys(l, {"start", "scale", "tensor"}, "layer");
            detail::get_as<double>(l, "start");
            if (l.contains("scale") == l.contains("tensor")) throw ConfigError("each layer needs exactly one of scale/tensor");
        }
        detail::get_as<double>(k, "lambda");
    } else if (ck == "checkerboard") {
        detail::only_keys(k, {"kind", "axis", "width", "scales", "lambda"}, "coefficients");
        const int axis = detail::get_as<int>(k, "axis");
        if (axis < 0 || axis > 2) throw ConfigError("checkerboard axis must be 0, 1 or 2");
        detail::positive(detail::get_as<double>(k, "width"), "checkerboard width");
        if (detail::get_as<std::vector<double>>(k, "scales").size() != 2) throw ConfigError("checkerboard needs 2 scales");
        detail::get_as<double>(k, "lambda");
    } else if (ck == "file") {
        detail::only_keys(k, {"kind", "path"}, "coefficients");
        detail::get_as<std::string>(k, "path");
    } else {
        throw ConfigError("unknown coefficients kind '" + ck + "'");
    }

    const auto& f = c.frame;
    detail::only_keys(f, {"axis", "rotation", "origin"}, "frame");
    if (f.contains("axis") == f.contains("rotation")) throw ConfigError("frame needs exactly one of axis/rotation");
    if (f.contains("axis")) {
        const int a = detail::get_as<int>(f, "axis");
        if (a < 0 || a > 2) throw ConfigError("frame axis must be 0, 1 or 2");
    }
    if (f.contains("rotation")) {
        const auto r = detail::get_as<std::vector<std::vector<double>>>(f, "rotation");
        if (r.size() != 3 || std::any_of(r.begin(), r.end(), [](const auto& row) { return row.size() != 3; }))
            throw ConfigError("frame rotation must be 3x3");
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw ConfigError("cannot open config " + p.string());
    Json j;
    try {
        j = Json::parse(is);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline Json to_json(const ExperimentConfig& c) {
    Json poles = "auto";
    if (!c.auto_poles) {
        poles = Json::array();
        for (const auto& p : c.poles) poles.push_back({p[0], p[1], p[2]});
    }
    return {{"domain", c.domain},
            {"coefficients", c.coefficients},
            {"frame", c.frame},
            {"poles", poles},
            {"epsilon_h", c.epsilon_h},
            {"solver", {{"tol", c.tol}, {"max_iter", c.max_iter}, {"stabilization", c.stabilization}}},
            {"estimates", c.estimates},
            {"output", c.output},
            {"seed", c.seed},
            {"R0", c.R0},
            {"workers", c.workers},
            {"memory_budget_mb", c.memory_budget_mb},
            {"tamper", {{"scale_G", c.tamper_scale}}},
            {"policy",
             {{"slope_window", c.policy.slope_window},
              {"lq_window", c.policy.lq_window},
              {"envelope_flatness", c.policy.envelope_flatness},
              {"energy_flatness", c.policy.energy_flatness},
              {"quotient_stability", c.policy.quotient_stability},
              {"symmetry_max", c.policy.symmetry_max},
              {"bogovskii_variation", c.policy.bogovskii_variation},
              {"representation_factor", c.policy.representation_factor},
              {"monotone_slack", c.policy.monotone_slack}}}};
}

/// Grid size per preset: smoke 16, standard 24, deep 32 cells per unit length.
inline std::optional<int> preset_cells(const std::string& name) {
    if (name == "smoke") return 16;
    if (name == "standard") return 24;
    if (name == "deep") return 32;
    return std::nullopt;
}

/// Preset experiment on the unit box with identity coefficients. Smoke runs
/// one pole and the decay estimate only.
inline Json preset_config(const std::string& name) {
    const auto n = preset_cells(name);
    if (!n) throw ConfigError("unknown preset '" + name + "'");
    Json j = {{"domain", {{"kind", "box"}, {"extent", {1.0, 1.0, 1.0}}, {"h", 1.0 / *n}}},
              {"coefficients", {{"kind", "identity"}}}};
    if (name == "smoke") {
        j["poles"] = Json::array({{0.5, 0.5, 0.5}});
        j["estimates"] = {"decay"};
        j["epsilon_h"] = {2.0};
    } else {
        j["estimates"] = known_estimates();
    }
    return j;
}

/// Domain from its descriptor, optionally at a different cell width.
inline VoxelDomain build_domain(const Json& d, std::optional<double> h_override = std::nullopt) {
    const auto kind = detail::get_as<std::string>(d, "kind");
    const double h = h_override.value_or(detail::get_as<double>(d, "h"));
    if (kind == "box") return build_box(detail::get_vec3(d, "extent"), h);
    if (kind == "l_shape")
        return build_l_shape(detail::get_vec3(d, "extent"), detail::get_vec3(d, "notch_lo"), detail::get_vec3(d, "notch_hi"), h);
    if (kind == "ball") return build_voxel_ball(detail::get_as<double>(d, "radius"), h);
    throw ConfigError("unknown domain kind '" + kind + "'");
}

inline Frame build_frame(const Json& f) {
    Vec3 origin{};
    if (f.contains("origin")) origin = detail::get_vec3(f, "origin");
    if (f.contains("axis")) return Frame::aligned(detail::get_as<int>(f, "axis"), origin);
    const auto r = detail::get_as<std::vector<std::vector<double>>>(f, "rotation");
    Mat3 m{};
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) m[a][b] = r[a][b];
    return Frame(origin, m);
}

inline Tensor tensor_from_json(const Json& t) {
    const auto v = t.get<std::vector<double>>();
    if (v.size() != 81) throw ConfigError("a tensor needs 81 entries");
    Tensor out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

inline CoefficientField build_coefficients(const Json& k, const VoxelDomain& domain, const Frame& frame) {
    const auto kind = detail::get_as<std::string>(k, "kind");
    try {
        if (kind == "identity") return constant_identity();
        if (kind == "layered") {
            std::vector<Layer> profile;
            for (const auto& l : k["layers"]) {
                Layer layer;
                layer.start = l["start"].get<double>();
                layer.tensor = l.contains("scale") ? identity_tensor(l["scale"].get<double>()) : tensor_from_json(l["tensor"]);
                profile.push_back(layer);
            }
            return piecewise_in_direction(domain, profile, frame, k["lambda"].get<double>());
        }
        if (kind == "checkerboard") {
            const auto s = k["scales"].get<std::vector<double>>();
            return alternating_in_direction(domain, k["axis"].get<int>(), k["width"].get<double>(), identity_tensor(s[0]),
                                            identity_tensor(s[1]), k["lambda"].get<double>());
        }
        if (kind == "file") return read_coefficient_file(k["path"].get<std::string>(), domain);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("coefficients: ") + e.what());
    }
    throw ConfigError("unknown coefficients kind '" + kind + "'");
}

}  // namespace sgreen
