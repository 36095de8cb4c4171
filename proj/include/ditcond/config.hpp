#pragma once

// Run configuration: a single JSON document, schema-validated before any
// computation. Unknown keys are rejected.

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ditcond/pipeline.hpp"
#include "ditcond/tokens.hpp"

namespace ditcond {

struct ConditionConfig {
    std::string raster_path;        // PGM P5; empty when synthetic
    bool synthetic = false;         // generated deterministic raster
    int synth_h = 0, synth_w = 0;   // raster dims when synthetic
    Placement placement = Aligned{};
    int a = 1;         // compression factor
    double tau = 0.0;  // prune threshold
    std::string integration_mask_path;  // non-empty selects token integration
};

struct BenchConfig {
    std::vector<std::pair<int, int>> resolutions = {{16, 16}, {32, 32}};
    std::vector<int> condition_counts = {0, 1, 2, 3, 4};
    std::vector<ExecMode> modes = {ExecMode::Full, ExecMode::ReuseMasked};
    int a = 2;
};

struct RunConfig {
    ModelConfig model;
    DenoiseConfig denoise;
    int noisy_h = 32, noisy_w = 32;  // raster-space dims; latent grid is /patch
    std::size_t text_tokens = 4;
    std::vector<ConditionConfig> conditions;
    bool probe = false;
    bool measure_wall_time = false;
    std::string output_dir = ".";
    BenchConfig bench;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::vector<std::string>& allowed,
                       const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("config: unknown key \"" + it.key() + "\" in " + where);
        }
    }
}

inline ExecMode parse_mode(const std::string& s) {
    if (s == "full") return ExecMode::Full;
    if (s == "naive_cache") return ExecMode::NaiveCache;
    if (s == "reuse_masked") return ExecMode::ReuseMasked;
    throw ConfigError("config: unknown mode \"" + s + "\"");
}

inline std::string mode_name(ExecMode m) {
    switch (m) {
        case ExecMode::Full: return "full";
        case ExecMode::NaiveCache: return "naive_cache";
        default: return "reuse_masked";
    }
}

inline Placement parse_placement(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "aligned") return Aligned{};
        throw ConfigError("config: placement must be \"aligned\" or an offset object");
    }
    check_keys(j, {"offset"}, "placement");
    const auto& off = j.at("offset");
    if (!off.is_array() || off.size() != 2) {
        throw ConfigError("config: offset must be [di, dj]");
    }
    return Offset{off[0].get<int>(), off[1].get<int>()};
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
    using detail::check_keys;
    RunConfig cfg;
    check_keys(j,
               {"model", "denoise", "noisy", "text_tokens", "conditions",
                "probe", "measure_wall_time", "output_dir", "bench"},
               "top level");
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"layers", "d", "heads", "mlp_ratio", "patch", "seed"},
                   "model");
        if (m.contains("layers")) cfg.model.layers = m.at("layers").get<std::size_t>();
        if (m.contains("d")) cfg.model.d = m.at("d").get<std::size_t>();
        if (m.contains("heads")) cfg.model.heads = m.at("heads").get<std::size_t>();
        if (m.contains("mlp_ratio")) cfg.model.mlp_ratio = m.at("mlp_ratio").get<std::size_t>();
        if (m.contains("patch")) cfg.model.patch = m.at("patch").get<int>();
        if (m.contains("seed")) cfg.model.seed = m.at("seed").get<std::uint64_t>();
    }
    if (j.contains("denoise")) {
        const auto& d = j.at("denoise");
        check_keys(d, {"steps", "mode", "mask", "sigma_max", "seed", "freeze_text"},
                   "denoise");
        if (d.contains("steps")) cfg.denoise.steps = d.at("steps").get<std::size_t>();
        if (d.contains("mode")) {
            cfg.denoise.mode = detail::parse_mode(d.at("mode").get<std::string>());
        }
        if (d.contains("mask")) {
            const auto s = d.at("mask").get<std::string>();
            if (s == "full") cfg.denoise.full_mode_mask = MaskMode::Full;
            else if (s == "asymmetric") cfg.denoise.full_mode_mask = MaskMode::Asymmetric;
            else throw ConfigError("config: mask must be \"full\" or \"asymmetric\"");
        }
        if (d.contains("sigma_max")) cfg.denoise.sigma_max = d.at("sigma_max").get<double>();
        if (d.contains("seed")) cfg.denoise.seed = d.at("seed").get<std::uint64_t>();
        if (d.contains("freeze_text")) cfg.denoise.freeze_text = d.at("freeze_text").get<bool>();
    }
    if (j.contains("noisy")) {
        const auto& n = j.at("noisy");
        check_keys(n, {"h", "w"}, "noisy");
        cfg.noisy_h = n.at("h").get<int>();
        cfg.noisy_w = n.at("w").get<int>();
    }
    if (j.contains("text_tokens")) cfg.text_tokens = j.at("text_tokens").get<std::size_t>();
    if (j.contains("probe")) cfg.probe = j.at("probe").get<bool>();
    if (j.contains("measure_wall_time")) {
        cfg.measure_wall_time = j.at("measure_wall_time").get<bool>();
    }
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("conditions")) {
        for (const auto& c : j.at("conditions")) {
            check_keys(c,
                       {"raster", "synthetic", "placement", "a", "tau",
                        "integration_mask"},
                       "conditions[]");
            ConditionConfig cc;
            if (c.contains("raster")) cc.raster_path = c.at("raster").get<std::string>();
            if (c.contains("synthetic")) {
                const auto& s = c.at("synthetic");
                check_keys(s, {"h", "w"}, "conditions[].synthetic");
                cc.synthetic = true;
                cc.synth_h = s.at("h").get<int>();
                cc.synth_w = s.at("w").get<int>();
            }
            if (cc.raster_path.empty() == !cc.synthetic) {
                throw ConfigError(
                    "config: condition needs exactly one of raster / synthetic");
            }
            if (c.contains("placement")) cc.placement = detail::parse_placement(c.at("placement"));
            if (c.contains("a")) cc.a = c.at("a").get<int>();
            if (c.contains("tau")) cc.tau = c.at("tau").get<double>();
            if (c.contains("integration_mask")) {
                cc.integration_mask_path = c.at("integration_mask").get<std::string>();
            }
            cfg.conditions.push_back(std::move(cc));
        }
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        check_keys(b, {"resolutions", "condition_counts", "modes", "a"}, "bench");
        if (b.contains("resolutions")) {
            cfg.bench.resolutions.clear();
            for (const auto& res : b.at("resolutions")) {
                if (!res.is_array() || res.size() != 2) {
                    throw ConfigError("config: bench resolution must be [h, w]");
                }
                cfg.bench.resolutions.emplace_back(res[0].get<int>(), res[1].get<int>());
            }
        }
        if (b.contains("condition_counts")) {
            cfg.bench.condition_counts = b.at("condition_counts").get<std::vector<int>>();
        }
        if (b.contains("modes")) {
            cfg.bench.modes.clear();
            for (const auto& m : b.at("modes")) {
                cfg.bench.modes.push_back(detail::parse_mode(m.get<std::string>()));
            }
        }
        if (b.contains("a")) cfg.bench.a = b.at("a").get<int>();
    }
    cfg.model.validate();
    cfg.denoise.validate();
    if (cfg.noisy_h < 1 || cfg.noisy_w < 1 || cfg.noisy_h % cfg.model.patch != 0 ||
        cfg.noisy_w % cfg.model.patch != 0) {
        throw ConfigError("config: noisy dims must be positive multiples of patch");
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    try {
        return parse_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

}  // namespace ditcond
