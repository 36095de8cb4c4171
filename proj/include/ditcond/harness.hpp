#pragma once

// Experiment orchestration shared by the CLI and the test suites: sequence
// assembly from a RunConfig, the verification suite, the bench sweep and the
// similarity probe.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ditcond/compact.hpp"
#include "ditcond/config.hpp"
#include "ditcond/costmodel.hpp"
#include "ditcond/pipeline.hpp"
#include "ditcond/raster.hpp"

namespace ditcond {

// Deterministic non-trivial raster used by bench sweeps and tests. Values are
// bounded away from zero so tau=0 pruning keeps every token.
inline Raster synthetic_raster(int h, int w, int variant) {
    Raster r(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            r.at(i, j) = 0.15 + 0.8 * std::abs(std::sin(0.37 * i + 0.53 * j +
                                                        1.7 * variant));
    return r;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return base * 0x100000001b3ULL + 0x9e3779b97f4a7c15ULL * (stream + 1);
}

struct RunArtifacts {
    Weights weights;
    std::optional<UnifiedSequence> seq;
    bool has_integration = false;
    IntegrationMask integration_mask;
    TokenSegment original_cond;  // latent condition tokens of the integrated run
    std::vector<int> prune_warnings;  // condition ordinals fully pruned
};

// Embed one (non-integration) condition: compress, patch-embed, correct
// positions, apply placement, prune.
inline TokenSegment build_condition_segment(const Raster& raster,
                                            const ConditionConfig& cc, int k,
                                            const ModelConfig& model,
                                            std::vector<int>* warnings) {
    const Raster compressed = compress(raster, CompressionSpec{cc.a});
    TokenSegment seg = embed_raster(compressed, model.patch, model.d,
                                    derive_seed(model.seed, 100 + k));
    seg.cond_ordinal = k;
    seg.positions = correct_positions(seg.positions, cc.a);
    if (const auto* off = std::get_if<Offset>(&cc.placement)) {
        if (off->di < 0 || off->dj < 0) {
            throw std::invalid_argument("condition placement: negative offset");
        }
        for (auto& p : seg.positions) {
            p.i += off->di;
            p.j += off->dj;
        }
    }
    if (cc.tau > 0.0) {
        // relevance is scored on the compressed raster
        PruneResult pr = prune(seg, compressed, model.patch, PruneSpec{cc.tau});
        if (pr.all_pruned && warnings != nullptr) warnings->push_back(k);
        seg = std::move(pr.segment);
        seg.cond_ordinal = k;
    }
    return seg;
}

inline RunArtifacts prepare_run(const RunConfig& cfg) {
    RunArtifacts art;
    art.weights = init_model(cfg.model);
    const int gh = cfg.noisy_h / cfg.model.patch;
    const int gw = cfg.noisy_w / cfg.model.patch;
    TokenSegment noisy =
        make_noise_segment(gh, gw, cfg.model.d, cfg.denoise.seed);
    TokenSegment text = synthetic_text(cfg.text_tokens, cfg.model.d,
                                       derive_seed(cfg.model.seed, 7));
    std::vector<TokenSegment> conds;
    int k = 0;
    for (const auto& cc : cfg.conditions) {
        const Raster raster = cc.synthetic
                                  ? synthetic_raster(cc.synth_h, cc.synth_w, k)
                                  : read_pgm(cc.raster_path);
        if (!cc.integration_mask_path.empty()) {
            if (art.has_integration) {
                throw std::invalid_argument("config: at most one integration condition");
            }
            if (cc.a != 1) {
                throw std::invalid_argument("config: integration condition must use a=1");
            }
            if (raster.h != cfg.noisy_h || raster.w != cfg.noisy_w) {
                throw std::invalid_argument(
                    "config: integration condition raster must match noisy dims");
            }
            art.integration_mask = read_mask_pgm(cc.integration_mask_path);
            if (art.integration_mask.h != gh || art.integration_mask.w != gw) {
                throw std::invalid_argument(
                    "config: integration mask must match the latent grid");
            }
            art.original_cond =
                embed_raster(raster, cfg.model.patch, cfg.model.d,
                             derive_seed(cfg.model.seed, 100 + k),
                             SegmentKind::Noisy);
            noisy = integrate(noisy, art.original_cond, art.integration_mask);
            art.has_integration = true;
        } else {
            conds.push_back(build_condition_segment(raster, cc, k, cfg.model,
                                                    &art.prune_warnings));
        }
        ++k;
    }
    art.seq.emplace(build_sequence(std::move(noisy), std::move(text),
                                   std::move(conds)));
    return art;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        mx = std::max(mx, std::abs(a.data[i] - b.data[i]));
    return mx;
}

inline CostInputs cost_inputs_for(const RunConfig& cfg,
                                  const UnifiedSequence& seq) {
    CostInputs in;
    in.steps = static_cast<flops::count_t>(cfg.denoise.steps);
    in.x_tokens = static_cast<flops::count_t>(seq.noisy_count());
    in.text_tokens = static_cast<flops::count_t>(seq.text_count());
    in.cond_tokens = static_cast<flops::count_t>(seq.image_cond_count());
    in.d = static_cast<flops::count_t>(cfg.model.d);
    in.layers = static_cast<flops::count_t>(cfg.model.layers);
    in.heads = static_cast<flops::count_t>(cfg.model.heads);
    in.mlp_ratio = static_cast<flops::count_t>(cfg.model.mlp_ratio);
    return in;
}

// ---------------------------------------------------------------------------
// Verification suite

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline DenoiseResult run_mode(const RunConfig& cfg, const RunArtifacts& art,
                              ExecMode mode, MaskMode full_mask,
                              bool probe = false, bool trace_layers = false) {
    DenoiseConfig dc = cfg.denoise;
    dc.mode = mode;
    dc.full_mode_mask = full_mask;
    dc.probe = probe;
    dc.trace_layers = trace_layers;
    return denoise(*art.seq, art.weights, dc);
}

}  // namespace detail

inline std::vector<CheckResult> run_verification(const RunConfig& cfg) {
    std::vector<CheckResult> out;
    const RunArtifacts art = prepare_run(cfg);
    const UnifiedSequence& seq = *art.seq;
    const std::size_t n_x = seq.noisy_count();
    const std::size_t n_total = seq.total_tokens();

    {  // mask structure
        const MaskSpec full = build_mask(seq, MaskMode::Full);
        const MaskSpec asym = build_mask(seq, MaskMode::Asymmetric,
                                         cfg.denoise.freeze_text);
        bool zeros = true;
        for (double v : full.bias.data) zeros = zeros && v == 0.0;
        std::size_t masked = 0;
        for (double v : asym.bias.data) {
            if (v == -std::numeric_limits<double>::infinity()) ++masked;
        }
        const std::size_t expected = (n_total - asym.reusable_start) * n_x;
        out.push_back({"mask_structure", zeros && masked == expected,
                       "masked entries " + std::to_string(masked) + ", expected " +
                           std::to_string(expected)});
    }

    {  // exact-reuse equivalence
        const auto reuse = detail::run_mode(cfg, art, ExecMode::ReuseMasked,
                                            MaskMode::Asymmetric);
        const auto full = detail::run_mode(cfg, art, ExecMode::Full,
                                           MaskMode::Asymmetric);
        const double diff =
            max_abs_diff(reuse.final_noisy.tokens, full.final_noisy.tokens);
        out.push_back({"reuse_equivalence", diff <= 1e-8,
                       "max abs diff " + detail::fmt(diff) + " (tol 1e-8)"});
    }

    {  // condition-feature constancy across layers and steps
        const auto full = detail::run_mode(cfg, art, ExecMode::Full,
                                           MaskMode::Asymmetric, true, true);
        double worst = 0.0;
        const std::size_t rs = build_mask(seq, MaskMode::Asymmetric,
                                          cfg.denoise.freeze_text)
                                   .reusable_start;
        for (std::size_t t = 1; t < full.trace.layer_hidden.size(); ++t) {
            for (std::size_t l = 0; l < full.trace.layer_hidden[t].size(); ++l) {
                const Matrix& h0 = full.trace.layer_hidden[0][l];
                const Matrix& ht = full.trace.layer_hidden[t][l];
                for (std::size_t r = rs; r < n_total; ++r)
                    for (std::size_t c = 0; c < seq.dim(); ++c)
                        worst = std::max(worst,
                                         std::abs(h0.at(r, c) - ht.at(r, c)));
            }
        }
        double probe_worst = 0.0;
        for (const auto& row : similarity_probe(full.trace)) {
            if (row.segment == 'C') {
                probe_worst = std::max(probe_worst,
                                       std::abs(row.cosine_vs_step1 - 1.0));
            }
        }
        out.push_back({"condition_constancy",
                       worst <= 1e-10 && probe_worst <= 1e-10,
                       "hidden-state drift " + detail::fmt(worst) +
                           ", probe deviation " + detail::fmt(probe_worst) +
                           " (tol 1e-10)"});
    }

    {  // naive-cache divergence (expected)
        const auto naive = detail::run_mode(cfg, art, ExecMode::NaiveCache,
                                            MaskMode::Full);
        const auto full = detail::run_mode(cfg, art, ExecMode::Full,
                                           MaskMode::Full);
        const double diff =
            max_abs_diff(naive.final_noisy.tokens, full.final_noisy.tokens);
        if (cfg.denoise.steps == 1) {
            out.push_back({"naive_divergence", diff == 0.0,
                           "n=1: modes coincide, diff " + detail::fmt(diff)});
        } else {
            out.push_back({"naive_divergence", diff > 1e-3,
                           "expected-divergence: max abs diff " +
                               detail::fmt(diff) + " (> 1e-3)"});
        }
    }

    if (art.has_integration) {  // frozen-token conservation on the config's run
        const auto res = detail::run_mode(cfg, art, cfg.denoise.mode,
                                          cfg.denoise.full_mode_mask);
        double worst = 0.0;
        for (std::size_t t = 0; t < res.final_noisy.count(); ++t) {
            if (art.integration_mask.m[t] != 0) continue;
            for (std::size_t c = 0; c < seq.dim(); ++c)
                worst = std::max(worst,
                                 std::abs(res.final_noisy.tokens.at(t, c) -
                                          art.original_cond.tokens.at(t, c)));
        }
        out.push_back({"frozen_conservation", worst == 0.0,
                       "max abs diff on mask=0 cells " + detail::fmt(worst) +
                           " (must be exactly 0)"});
    }

    {  // instrumented counter vs analytic model, Full mode
        const auto full = detail::run_mode(cfg, art, ExecMode::Full,
                                           MaskMode::Full);
        const CostInputs in = cost_inputs_for(cfg, seq);
        const auto analytic = costmodel::run_flops(in, in.cond_tokens, false);
        const bool ok =
            full.flops_total.token_independent == analytic.token_independent &&
            full.flops_total.attention_pairs == analytic.attention &&
            full.flops_total.output_head == analytic.head;
        out.push_back({"flop_instrumentation_full", ok,
                       "measured ti " + std::to_string(full.flops_total.token_independent) +
                           " vs analytic " + std::to_string(analytic.token_independent)});
    }

    {  // instrumented counter vs analytic model, ReuseMasked mode
        const auto reuse = detail::run_mode(cfg, art, ExecMode::ReuseMasked,
                                            MaskMode::Asymmetric);
        const CostInputs in = cost_inputs_for(cfg, seq);
        const auto analytic = costmodel::run_flops(in, in.cond_tokens, true);
        bool ok =
            reuse.flops_total.token_independent == analytic.token_independent &&
            reuse.flops_total.attention_pairs == analytic.attention &&
            reuse.flops_total.output_head == analytic.head;
        // steady-state per-step identity: ti = c1 * |X|
        if (cfg.denoise.steps >= 2) {
            const auto c1 =
                in.layers * costmodel::per_token_layer(in.d, in.heads, in.mlp_ratio);
            for (std::size_t t = 1; t < reuse.flops_per_step.size(); ++t) {
                ok = ok && reuse.flops_per_step[t].token_independent ==
                               c1 * in.x_tokens;
            }
        }
        out.push_back({"flop_instrumentation_reuse", ok,
                       "per-run and per-step FLOP identities"});
    }

    {  // speedup algebra worked examples
        CostInputs a;
        a.steps = 28;
        a.r = 0.25;
        a.cond_tokens = 256;
        const auto ra = costmodel::speedups(a);
        CostInputs b = a;
        b.steps = 4;
        const auto rb = costmodel::speedups(b);
        const bool ok = ra.alpha_total == 112.0 && rb.alpha_total == 16.0 &&
                        ra.alpha_total == ra.alpha_compact * ra.alpha_reuse;
        out.push_back({"speedup_algebra", ok,
                       "alpha_total(28,0.25)=" + detail::fmt(ra.alpha_total) +
                           ", alpha_total(4,0.25)=" + detail::fmt(rb.alpha_total)});
    }

    {  // overhead reduction, analytic and instrumented on a small fixture
        CostInputs in;
        in.steps = 28;
        in.x_tokens = 16;
        in.text_tokens = 4;
        in.cond_tokens = 16;
        in.d = 32;
        in.layers = 2;
        in.heads = 4;
        in.mlp_ratio = 2;
        in.r = 0.25;
        const auto red = costmodel::overhead_reduction(in, true, true);

        RunConfig small;
        small.model = {2, 32, 4, 2, 2, 11};
        small.denoise.steps = 28;
        small.noisy_h = 8;
        small.noisy_w = 8;
        small.text_tokens = 4;
        ConditionConfig cc;
        cc.synthetic = true;
        cc.synth_h = 8;
        cc.synth_w = 8;
        small.conditions = {cc};
        auto measure_overhead_ti = [&](ExecMode mode, int a) {
            RunConfig with = small;
            with.conditions[0].a = a;
            RunConfig without = small;
            without.conditions.clear();
            const auto art_w = prepare_run(with);
            const auto art_o = prepare_run(without);
            const auto r_w = detail::run_mode(
                with, art_w, mode,
                mode == ExecMode::Full ? MaskMode::Full : MaskMode::Asymmetric);
            const auto r_o = detail::run_mode(
                without, art_o, mode,
                mode == ExecMode::Full ? MaskMode::Full : MaskMode::Asymmetric);
            return r_w.flops_total.token_independent -
                   r_o.flops_total.token_independent;
        };
        const auto base_ti = measure_overhead_ti(ExecMode::Full, 1);
        const auto opt_ti = measure_overhead_ti(ExecMode::ReuseMasked, 2);
        const auto analytic_base =
            costmodel::condition_overhead(in, false, false).token_independent;
        const auto analytic_opt =
            costmodel::condition_overhead(in, true, true).token_independent;
        const double measured_red =
            1.0 - static_cast<double>(opt_ti) / static_cast<double>(base_ti);
        const bool ok = red.token_independent >= 0.90 && measured_red >= 0.90 &&
                        base_ti == analytic_base && opt_ti == analytic_opt;
        out.push_back({"overhead_reduction", ok,
                       "analytic " + detail::fmt(red.token_independent) +
                           ", instrumented " + detail::fmt(measured_red) +
                           " (>= 0.90, integer match required)"});
    }

    return out;
}

// ---------------------------------------------------------------------------
// Bench sweep

struct BenchRow {
    int h = 0, w = 0;
    int cond_count = 0;
    ExecMode mode = ExecMode::Full;
    std::size_t steps = 0;
    double r = 1.0;
    flops::count_t flops_total = 0;
    flops::count_t flops_condition_overhead = 0;
    std::optional<double> wall_ms_median;
    double alpha_compact = 1.0, alpha_reuse = 1.0, alpha_total = 1.0;
    flops::count_t flops_ti_steps2plus = 0;
};

inline std::vector<BenchRow> run_bench(const RunConfig& cfg) {
    std::vector<BenchRow> rows;
    const double r = 1.0 / (static_cast<double>(cfg.bench.a) * cfg.bench.a);
    // baseline (K=0) totals per (resolution, mode)
    std::map<std::pair<std::pair<int, int>, int>, flops::count_t> baseline;

    for (const auto& res : cfg.bench.resolutions) {
        for (int mode_i = 0; mode_i < static_cast<int>(cfg.bench.modes.size());
             ++mode_i) {
            const ExecMode mode = cfg.bench.modes[mode_i];
            for (int k_count : cfg.bench.condition_counts) {
                RunConfig point = cfg;
                point.noisy_h = res.first;
                point.noisy_w = res.second;
                point.conditions.clear();
                for (int k = 0; k < k_count; ++k) {
                    ConditionConfig cc;
                    cc.synthetic = true;
                    cc.synth_h = res.first;
                    cc.synth_w = res.second;
                    cc.a = cfg.bench.a;
                    point.conditions.push_back(cc);
                }
                const RunArtifacts art = prepare_run(point);
                const MaskMode mask = mode == ExecMode::Full
                                          ? MaskMode::Full
                                          : MaskMode::Asymmetric;

                auto run_once = [&] { return detail::run_mode(point, art, mode, mask); };
                DenoiseResult res_run = run_once();
                std::optional<double> wall;
                if (cfg.measure_wall_time) {
                    run_once();  // second warmup (first was res_run)
                    std::vector<double> ms;
                    for (int i = 0; i < 5; ++i) {
                        const auto t0 = std::chrono::steady_clock::now();
                        run_once();
                        const auto t1 = std::chrono::steady_clock::now();
                        ms.push_back(std::chrono::duration<double, std::milli>(
                                         t1 - t0)
                                         .count());
                    }
                    std::sort(ms.begin(), ms.end());
                    wall = ms[ms.size() / 2];
                }

                BenchRow row;
                row.h = res.first;
                row.w = res.second;
                row.cond_count = k_count;
                row.mode = mode;
                row.steps = cfg.denoise.steps;
                row.r = r;
                row.flops_total = res_run.flops_total.total();
                if (k_count == 0) {
                    baseline[{res, mode_i}] = row.flops_total;
                } else if (!baseline.contains({res, mode_i})) {
                    RunConfig zero = point;
                    zero.conditions.clear();
                    const auto art0 = prepare_run(zero);
                    baseline[{res, mode_i}] =
                        detail::run_mode(zero, art0, mode, mask)
                            .flops_total.total();
                }
                row.flops_condition_overhead =
                    row.flops_total - baseline[{res, mode_i}];
                row.wall_ms_median = wall;
                CostInputs in = cost_inputs_for(point, *art.seq);
                in.r = r;
                row.alpha_compact = 1.0 / r;
                row.alpha_reuse = static_cast<double>(in.steps);
                row.alpha_total = row.alpha_compact * row.alpha_reuse;
                row.flops_ti_steps2plus =
                    res_run.flops_per_step.size() >= 2
                        ? res_run.flops_per_step[1].token_independent
                        : res_run.flops_per_step[0].token_independent;
                rows.push_back(row);
            }
        }
    }
    return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "h,w,K,mode,n,r,flops_total,flops_condition_overhead,"
          "wall_ms_median,alpha_compact,alpha_reuse,alpha_total,"
          "flops_ti_steps2plus\n";
    for (const auto& row : rows) {
        os << row.h << ',' << row.w << ',' << row.cond_count << ','
           << detail::mode_name(row.mode) << ',' << row.steps << ','
           << detail::fmt(row.r) << ',' << row.flops_total << ','
           << row.flops_condition_overhead << ',';
        if (row.wall_ms_median) os << detail::fmt(*row.wall_ms_median);
        os << ',' << detail::fmt(row.alpha_compact) << ','
           << detail::fmt(row.alpha_reuse) << ',' << detail::fmt(row.alpha_total)
           << ',' << row.flops_ti_steps2plus << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Similarity probe

inline std::string probe_csv(const RunConfig& cfg) {
    RunConfig probe_cfg = cfg;
    probe_cfg.probe = true;
    const RunArtifacts art = prepare_run(probe_cfg);
    const auto res = detail::run_mode(probe_cfg, art, cfg.denoise.mode,
                                      cfg.denoise.full_mode_mask, true, false);
    std::ostringstream os;
    os << "step,segment,cosine_vs_step1\n";
    char buf[64];
    for (const auto& row : similarity_probe(res.trace)) {
        std::snprintf(buf, sizeof(buf), "%.12f", row.cosine_vs_step1);
        os << row.step << ',' << row.segment << ',' << buf << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Cost table

inline std::string cost_table(const CostInputs& in) {
    const auto rep = costmodel::speedups(in);
    std::ostringstream os;
    os << "n=" << in.steps << " r=" << detail::fmt(in.r) << " |X|=" << in.x_tokens
       << " |C_T|=" << in.text_tokens << " |C_I|=" << in.cond_tokens
       << " d=" << in.d << " L=" << in.layers << "\n"
       << "alpha_compact: " << detail::fmt(rep.alpha_compact) << "\n"
       << "alpha_reuse:   " << detail::fmt(rep.alpha_reuse) << "\n"
       << "alpha_total:   " << detail::fmt(rep.alpha_total) << "\n"
       << "flops_baseline:  " << rep.flops_baseline << "\n"
       << "flops_optimized: " << rep.flops_optimized << "\n"
       << "condition_overhead_baseline:  " << rep.condition_overhead_baseline
       << "\n"
       << "condition_overhead_optimized: " << rep.condition_overhead_optimized
       << "\n";
    return os.str();
}

}  // namespace ditcond
