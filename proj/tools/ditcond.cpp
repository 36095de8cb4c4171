// Command-line entry point: verify / bench / probe / cost.
//
// Exit codes: 0 success, 1 check or run failure, 2 usage or config error.
// Output directory precedence: --out flag, then DITCOND_OUT_DIR, then the
// config's output_dir.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ditcond/harness.hpp"

namespace {

std::string resolve_out_dir(const std::string& flag_value,
                            const std::string& config_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("DITCOND_OUT_DIR"); env != nullptr && *env) {
        return env;
    }
    return config_value;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

int cmd_verify(const std::string& config_path, const std::string& out_flag) {
    const ditcond::RunConfig cfg = ditcond::load_config(config_path);
    const auto results = ditcond::run_verification(cfg);
    const std::string out_dir = resolve_out_dir(out_flag, cfg.output_dir);
    std::filesystem::create_directories(out_dir);

    nlohmann::json lines;
    std::string report;
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": "
                  << r.detail << "\n";
        nlohmann::json line = {{"check", r.name}, {"pass", r.pass},
                               {"detail", r.detail}};
        report += line.dump() + "\n";
        all_pass = all_pass && r.pass;
    }
    write_file(out_dir + "/verify_report.jsonl", report);
    std::cout << (all_pass ? "all checks passed\n" : "some checks FAILED\n");
    return all_pass ? 0 : 1;
}

int cmd_bench(const std::string& config_path, const std::string& out_flag) {
    const ditcond::RunConfig cfg = ditcond::load_config(config_path);
    const auto rows = ditcond::run_bench(cfg);
    const std::string csv = ditcond::bench_csv(rows);
    const std::string out_dir = resolve_out_dir(out_flag, cfg.output_dir);
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/bench.csv", csv);
    std::cout << csv;
    return 0;
}

int cmd_probe(const std::string& config_path, const std::string& out_flag) {
    const ditcond::RunConfig cfg = ditcond::load_config(config_path);
    const std::string csv = ditcond::probe_csv(cfg);
    const std::string out_dir = resolve_out_dir(out_flag, cfg.output_dir);
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/probe.csv", csv);
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compact-conditioning / feature-reuse study harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir;

    auto* verify = app.add_subcommand("verify", "run the invariant suite");
    verify->add_option("--config", config_path, "JSON config")->required();
    verify->add_option("--out", out_dir, "output directory override");

    auto* bench = app.add_subcommand("bench", "FLOP/latency sweep to CSV");
    bench->add_option("--config", config_path, "JSON config")->required();
    bench->add_option("--out", out_dir, "output directory override");

    auto* probe = app.add_subcommand("probe", "feature-similarity probe to CSV");
    probe->add_option("--config", config_path, "JSON config")->required();
    probe->add_option("--out", out_dir, "output directory override");

    ditcond::CostInputs cost_in;
    auto* cost = app.add_subcommand("cost", "speedup algebra report");
    cost->add_option("--steps", cost_in.steps, "denoising steps n")->required();
    double r_value = 1.0;
    cost->add_option("--r", r_value, "retained condition-token fraction")->required();
    cost->add_option("--x", cost_in.x_tokens, "noisy token count");
    cost->add_option("--text", cost_in.text_tokens, "text token count");
    cost->add_option("--cond", cost_in.cond_tokens, "condition token count");
    cost->add_option("--d", cost_in.d, "embedding dim");
    cost->add_option("--layers", cost_in.layers, "layer count");
    cost->add_option("--heads", cost_in.heads, "head count");
    cost->add_option("--mlp", cost_in.mlp_ratio, "mlp expansion ratio");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (verify->parsed()) return cmd_verify(config_path, out_dir);
        if (bench->parsed()) return cmd_bench(config_path, out_dir);
        if (probe->parsed()) return cmd_probe(config_path, out_dir);
        cost_in.r = r_value;
        cost_in.validate();
        std::cout << ditcond::cost_table(cost_in);
        return 0;
    } catch (const ditcond::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
