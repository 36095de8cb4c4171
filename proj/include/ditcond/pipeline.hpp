#pragma once

// Toy DiT block stack and the multi-step denoising loop with three execution
// modes: Full (recompute everything), NaiveCache (cache KV from an unmasked
// first step) and ReuseMasked (asymmetric mask + one-shot KV cache).

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "ditcond/attention.hpp"
#include "ditcond/flops.hpp"
#include "ditcond/tensor.hpp"
#include "ditcond/tokens.hpp"

namespace ditcond {

struct ModelConfig {
    std::size_t layers = 4;
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    int patch = 2;
    std::uint64_t seed = 0;

    std::size_t d_head() const { return d / heads; }

    void validate() const {
        if (layers < 1) throw std::invalid_argument("ModelConfig: layers must be >= 1");
        if (heads < 1 || d % heads != 0) {
            throw std::invalid_argument("ModelConfig: d must be divisible by heads");
        }
        if (d_head() % 4 != 0) {
            throw std::invalid_argument(
                "ModelConfig: head dim must be divisible by 4 for 2D rotary");
        }
        if (mlp_ratio < 1) throw std::invalid_argument("ModelConfig: mlp_ratio must be >= 1");
        if (patch < 1) throw std::invalid_argument("ModelConfig: patch must be >= 1");
    }
};

constexpr std::size_t kModEmbedDim = 8;

struct BlockWeights {
    AttentionWeights attn;
    Matrix w_mlp_in;   // d x (mlp_ratio*d)
    Matrix w_mlp_out;  // (mlp_ratio*d) x d
};

struct Weights {
    ModelConfig cfg;
    std::vector<BlockWeights> blocks;
    Matrix w_head;  // d x d velocity projection
    // sigma-conditioned modulation: four projection vectors over the
    // sinusoidal sigma embedding
    std::vector<double> mod_attn_scale, mod_attn_shift;
    std::vector<double> mod_mlp_scale, mod_mlp_shift;
};

inline std::size_t param_count(const ModelConfig& cfg) {
    return cfg.layers * (4 + 2 * cfg.mlp_ratio) * cfg.d * cfg.d +
           cfg.d * cfg.d + 4 * kModEmbedDim;
}

inline Weights init_model(const ModelConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> dist(0.0, 0.02);
    auto fill = [&](Matrix& m, std::size_t r, std::size_t c) {
        m = Matrix(r, c);
        for (auto& x : m.data) x = dist(rng);
    };
    Weights w;
    w.cfg = cfg;
    w.blocks.resize(cfg.layers);
    const std::size_t hidden = cfg.mlp_ratio * cfg.d;
    for (auto& b : w.blocks) {
        fill(b.attn.wq, cfg.d, cfg.d);
        fill(b.attn.wk, cfg.d, cfg.d);
        fill(b.attn.wv, cfg.d, cfg.d);
        fill(b.attn.wo, cfg.d, cfg.d);
        fill(b.w_mlp_in, cfg.d, hidden);
        fill(b.w_mlp_out, hidden, cfg.d);
    }
    fill(w.w_head, cfg.d, cfg.d);
    // Modulation vectors are unit scale so the sigma conditioning produces a
    // visible per-step signal even with small projection weights.
    std::normal_distribution<double> mod_dist(0.0, 1.0);
    auto fill_vec = [&](std::vector<double>& v) {
        v.resize(kModEmbedDim);
        for (auto& x : v) x = mod_dist(rng);
    };
    fill_vec(w.mod_attn_scale);
    fill_vec(w.mod_attn_shift);
    fill_vec(w.mod_mlp_scale);
    fill_vec(w.mod_mlp_shift);
    return w;
}

struct StepMod {
    double attn_scale = 1.0, attn_shift = 0.0;
    double mlp_scale = 1.0, mlp_shift = 0.0;
};

// Scalar scale/shift per stream from a sinusoidal embedding of sigma.
inline StepMod step_modulation(const Weights& w, double sigma) {
    std::vector<double> emb(kModEmbedDim);
    for (std::size_t t = 0; t * 2 < kModEmbedDim; ++t) {
        const double omega = std::pow(4.0, static_cast<double>(t));
        emb[2 * t] = std::sin(sigma * omega);
        emb[2 * t + 1] = std::cos(sigma * omega);
    }
    auto dot = [&](const std::vector<double>& p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < kModEmbedDim; ++i) acc += p[i] * emb[i];
        return acc;
    };
    StepMod m;
    m.attn_scale = 1.0 + 0.5 * std::tanh(dot(w.mod_attn_scale));
    m.attn_shift = 0.5 * std::tanh(dot(w.mod_attn_shift));
    m.mlp_scale = 1.0 + 0.5 * std::tanh(dot(w.mod_mlp_scale));
    m.mlp_shift = 0.5 * std::tanh(dot(w.mod_mlp_shift));
    return m;
}

namespace detail {

constexpr double kNormEps = 1e-6;

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

// norm + scalar modulation on each row; rows < split use `front`, the rest
// use `back`.
inline Matrix norm_modulate(const Matrix& h, std::size_t split,
                            const StepMod& front, const StepMod& back,
                            bool mlp_pair, flops::FlopCounter* fc) {
    Matrix out(h.rows, h.cols);
    std::vector<double> row(h.cols);
    for (std::size_t r = 0; r < h.rows; ++r) {
        const StepMod& m = r < split ? front : back;
        const double scale = mlp_pair ? m.mlp_scale : m.attn_scale;
        const double shift = mlp_pair ? m.mlp_shift : m.attn_shift;
        row.assign(h.row_ptr(r), h.row_ptr(r) + h.cols);
        auto normed = rms_norm(row, kNormEps);
        for (std::size_t c = 0; c < h.cols; ++c)
            out.at(r, c) = scale * normed[c] + shift;
    }
    if (fc != nullptr) {
        const auto n = static_cast<flops::count_t>(h.rows);
        const auto d = static_cast<flops::count_t>(h.cols);
        fc->token_independent += n * (flops::rms_norm(d) + flops::modulate(d));
    }
    return out;
}

inline void mlp_residual(Matrix& h, const BlockWeights& bw,
                         const Matrix& normed, flops::FlopCounter* fc) {
    Matrix mid = matmul(normed, bw.w_mlp_in);
    for (auto& x : mid.data) x = silu(x);
    const Matrix out = matmul(mid, bw.w_mlp_out);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += out.data[i];
    if (fc != nullptr) {
        const auto n = static_cast<flops::count_t>(h.rows);
        const auto d = static_cast<flops::count_t>(h.cols);
        const auto hid = static_cast<flops::count_t>(bw.w_mlp_in.cols);
        fc->token_independent += flops::matmul(n, d, hid);
        fc->token_independent += n * hid * flops::activation_elem();
        fc->token_independent += flops::matmul(n, hid, d);
        fc->token_independent += n * flops::residual(d);
    }
}

inline void add_residual(Matrix& h, const Matrix& delta,
                         flops::FlopCounter* fc) {
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += delta.data[i];
    if (fc != nullptr) {
        fc->token_independent += static_cast<flops::count_t>(h.rows) *
                                 flops::residual(static_cast<flops::count_t>(h.cols));
    }
}

}  // namespace detail

// One transformer block over the full sequence. Rows < reusable_start get the
// step-dependent modulation, the reusable block gets the step-1 modulation.
inline Matrix block_forward(const Matrix& h,
                            const std::vector<PositionIndex>& positions,
                            const BlockWeights& bw, std::size_t heads,
                            const MaskSpec& mask, std::size_t reusable_start,
                            const StepMod& step_mod, const StepMod& reuse_mod,
                            flops::FlopCounter* fc = nullptr,
                            KVCache* cache_out = nullptr,
                            std::size_t layer = 0) {
    Matrix out = h;
    Matrix normed = detail::norm_modulate(h, reusable_start, step_mod, reuse_mod,
                                          /*mlp_pair=*/false, fc);
    const Matrix attn =
        attend_full(normed, positions, bw.attn, heads, mask, fc, cache_out, layer);
    detail::add_residual(out, attn, fc);
    Matrix normed2 = detail::norm_modulate(out, reusable_start, step_mod,
                                           reuse_mod, /*mlp_pair=*/true, fc);
    detail::mlp_residual(out, bw, normed2, fc);
    return out;
}

// Cached-step block: only the recomputed rows flow through; the reusable
// block appears solely as cached attention context.
inline Matrix block_forward_cached(const Matrix& h_x,
                                   const std::vector<PositionIndex>& x_positions,
                                   const BlockWeights& bw, std::size_t heads,
                                   const KVCache& cache, std::size_t layer,
                                   const StepMod& step_mod,
                                   flops::FlopCounter* fc = nullptr) {
    Matrix out = h_x;
    Matrix normed = detail::norm_modulate(h_x, h_x.rows, step_mod, step_mod,
                                          /*mlp_pair=*/false, fc);
    const Matrix attn =
        attend_cached(normed, x_positions, bw.attn, heads, cache, layer, fc);
    detail::add_residual(out, attn, fc);
    Matrix normed2 = detail::norm_modulate(out, h_x.rows, step_mod, step_mod,
                                           /*mlp_pair=*/true, fc);
    detail::mlp_residual(out, bw, normed2, fc);
    return out;
}

// Velocity head: final norm + modulation + linear projection, applied to the
// noisy rows only.
inline Matrix velocity_head(const Matrix& h, std::size_t noisy_count,
                            const Weights& w, const StepMod& step_mod,
                            flops::FlopCounter* fc = nullptr) {
    Matrix noisy(noisy_count, h.cols);
    for (std::size_t r = 0; r < noisy_count; ++r)
        for (std::size_t c = 0; c < h.cols; ++c) noisy.at(r, c) = h.at(r, c);
    const Matrix normed = detail::norm_modulate(noisy, noisy_count, step_mod,
                                                step_mod, false, nullptr);
    Matrix v = matmul(normed, w.w_head);
    if (fc != nullptr) {
        const auto n = static_cast<flops::count_t>(noisy_count);
        const auto d = static_cast<flops::count_t>(h.cols);
        fc->output_head += n * (flops::rms_norm(d) + flops::modulate(d)) +
                           flops::matmul(n, d, d);
    }
    return v;
}

enum class ExecMode : std::uint8_t { Full, NaiveCache, ReuseMasked };

struct DenoiseConfig {
    std::size_t steps = 8;
    ExecMode mode = ExecMode::Full;
    MaskMode full_mode_mask = MaskMode::Full;  // mask used by Full mode
    double sigma_max = 1.0;
    bool freeze_text = true;  // text segment is part of the reusable block
    bool probe = false;
    bool trace_layers = false;  // record per-layer hidden states (toy scale)
    std::uint64_t seed = 0;     // initial-noise seed

    // Linear schedule: sigma[t] for t=0..steps, ending at exactly 0.
    std::vector<double> schedule() const {
        std::vector<double> s(steps + 1);
        for (std::size_t t = 0; t <= steps; ++t) {
            s[t] = sigma_max *
                   (1.0 - static_cast<double>(t) / static_cast<double>(steps));
        }
        return s;
    }

    void validate() const {
        if (steps < 1) throw std::invalid_argument("DenoiseConfig: steps must be >= 1");
        if (sigma_max <= 0.0) {
            throw std::invalid_argument("DenoiseConfig: sigma_max must be > 0");
        }
        const auto s = schedule();
        for (std::size_t t = 1; t < s.size(); ++t) {
            if (!(s[t] < s[t - 1])) {
                throw std::invalid_argument("DenoiseConfig: schedule not strictly decreasing");
            }
        }
    }
};

struct StepTrace {
    // per step: probe-layer hidden states for the noisy segment and the
    // condition segments (all image-condition rows concatenated)
    std::vector<Matrix> noisy_features;
    std::vector<Matrix> cond_features;
    // per step, per layer: full hidden matrices (only when trace_layers)
    std::vector<std::vector<Matrix>> layer_hidden;
    std::size_t probe_layer = 0;
};

struct DenoiseResult {
    TokenSegment final_noisy;
    StepTrace trace;
    flops::FlopCounter flops_total;
    std::vector<flops::FlopCounter> flops_per_step;
};

inline TokenSegment make_noise_segment(int gh, int gw, std::size_t d,
                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    TokenSegment seg;
    seg.kind = SegmentKind::Noisy;
    seg.tokens = Matrix(static_cast<std::size_t>(gh) * gw, d);
    for (auto& x : seg.tokens.data) x = dist(rng);
    seg.positions = noisy_positions(gh, gw);
    return seg;
}

inline DenoiseResult denoise(const UnifiedSequence& seq0, const Weights& w,
                             const DenoiseConfig& cfg) {
    cfg.validate();
    const std::size_t n_x = seq0.noisy_count();
    const std::size_t n_total = seq0.total_tokens();
    const std::size_t d = seq0.dim();
    const std::size_t L = w.cfg.layers;

    const MaskMode step1_mask_mode =
        cfg.mode == ExecMode::Full
            ? cfg.full_mode_mask
            : (cfg.mode == ExecMode::ReuseMasked ? MaskMode::Asymmetric
                                                 : MaskMode::Full);
    const MaskSpec mask = build_mask(seq0, step1_mask_mode, cfg.freeze_text);
    const std::size_t reusable_start = mask.reusable_start;
    const std::size_t n_reusable = n_total - reusable_start;
    const bool cached_mode = cfg.mode != ExecMode::Full;

    const auto sigmas = cfg.schedule();
    const StepMod reuse_mod = step_modulation(w, sigmas[0]);

    Matrix tokens = seq0.flat_tokens();
    const auto positions = seq0.flat_positions();
    const auto frozen = seq0.flat_frozen();
    const std::vector<PositionIndex> x_positions(positions.begin(),
                                                 positions.begin() + reusable_start);

    DenoiseResult res;
    res.trace.probe_layer = (L + 1) / 2;  // 1-based mid-stack layer
    KVCache cache;

    Matrix step1_cond_probe;  // reused for cached steps >= 2

    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        flops::FlopCounter fc;
        const StepMod step_mod = step_modulation(w, sigmas[t - 1]);
        // Under the asymmetric mask the reusable block is pinned to the step-1
        // modulation; an unmasked run modulates every row per step, which is
        // exactly what a stale cache fails to track.
        const StepMod block_reuse_mod =
            step1_mask_mode == MaskMode::Asymmetric ? reuse_mod : step_mod;
        Matrix velocity;
        std::vector<Matrix> layer_snapshots;

        const bool full_pass = !cached_mode || t == 1;
        if (full_pass) {
            KVCache* cache_out = nullptr;
            if (cached_mode) {
                cache.begin_population(L, n_reusable);
                cache_out = &cache;
            }
            Matrix h = tokens;
            for (std::size_t l = 0; l < L; ++l) {
                h = block_forward(h, positions, w.blocks[l], w.cfg.heads, mask,
                                  reusable_start, step_mod, block_reuse_mod, &fc,
                                  cache_out, l);
                if (cfg.trace_layers) layer_snapshots.push_back(h);
                if (cfg.probe && l + 1 == res.trace.probe_layer) {
                    Matrix noisy_f(n_x, d), cond_f(seq0.image_cond_count(), d);
                    for (std::size_t r = 0; r < n_x; ++r)
                        for (std::size_t c = 0; c < d; ++c)
                            noisy_f.at(r, c) = h.at(r, c);
                    const std::size_t cond_start = n_x + seq0.text_count();
                    for (std::size_t r = 0; r < cond_f.rows; ++r)
                        for (std::size_t c = 0; c < d; ++c)
                            cond_f.at(r, c) = h.at(cond_start + r, c);
                    res.trace.noisy_features.push_back(std::move(noisy_f));
                    if (t == 1) step1_cond_probe = cond_f;
                    res.trace.cond_features.push_back(std::move(cond_f));
                }
            }
            if (cached_mode) cache.finish_population();
            velocity = velocity_head(h, n_x, w, step_mod, &fc);
        } else {
            Matrix h(reusable_start, d);
            for (std::size_t r = 0; r < reusable_start; ++r)
                for (std::size_t c = 0; c < d; ++c) h.at(r, c) = tokens.at(r, c);
            for (std::size_t l = 0; l < L; ++l) {
                h = block_forward_cached(h, x_positions, w.blocks[l], w.cfg.heads,
                                         cache, l, step_mod, &fc);
                if (cfg.trace_layers) layer_snapshots.push_back(h);
                if (cfg.probe && l + 1 == res.trace.probe_layer) {
                    Matrix noisy_f(n_x, d);
                    for (std::size_t r = 0; r < n_x; ++r)
                        for (std::size_t c = 0; c < d; ++c)
                            noisy_f.at(r, c) = h.at(r, c);
                    res.trace.noisy_features.push_back(std::move(noisy_f));
                    // condition features are literally the cached step-1 ones
                    res.trace.cond_features.push_back(step1_cond_probe);
                }
            }
            velocity = velocity_head(h, n_x, w, step_mod, &fc);
        }

        // Euler update on non-frozen noisy tokens
        const double dsigma = sigmas[t] - sigmas[t - 1];
        for (std::size_t r = 0; r < n_x; ++r) {
            if (!frozen.empty() && frozen[r] != 0) continue;
            for (std::size_t c = 0; c < d; ++c)
                tokens.at(r, c) += dsigma * velocity.at(r, c);
        }

        if (cfg.trace_layers) res.trace.layer_hidden.push_back(std::move(layer_snapshots));
        res.flops_per_step.push_back(fc);
        res.flops_total.token_independent += fc.token_independent;
        res.flops_total.attention_pairs += fc.attention_pairs;
        res.flops_total.output_head += fc.output_head;
    }

    res.final_noisy.kind = SegmentKind::Noisy;
    res.final_noisy.tokens = Matrix(n_x, d);
    for (std::size_t r = 0; r < n_x; ++r)
        for (std::size_t c = 0; c < d; ++c)
            res.final_noisy.tokens.at(r, c) = tokens.at(r, c);
    res.final_noisy.positions = std::vector<PositionIndex>(
        positions.begin(), positions.begin() + n_x);
    if (!frozen.empty()) {
        res.final_noisy.frozen.assign(frozen.begin(), frozen.begin() + n_x);
    }
    return res;
}

struct ProbeRow {
    std::size_t step = 0;
    char segment = 'X';  // 'X' noisy, 'C' condition
    double cosine_vs_step1 = 1.0;
};

inline std::vector<ProbeRow> similarity_probe(const StepTrace& trace) {
    if (trace.noisy_features.empty()) {
        throw std::invalid_argument("similarity_probe: empty trace");
    }
    std::vector<ProbeRow> rows;
    const auto flat = [](const Matrix& m) { return m.data; };
    for (std::size_t t = 0; t < trace.noisy_features.size(); ++t) {
        rows.push_back({t + 1, 'X',
                        cosine_similarity(flat(trace.noisy_features[0]),
                                          flat(trace.noisy_features[t]))});
        if (!trace.cond_features.empty() && trace.cond_features[0].data.size() > 0) {
            rows.push_back({t + 1, 'C',
                            cosine_similarity(flat(trace.cond_features[0]),
                                              flat(trace.cond_features[t]))});
        }
    }
    return rows;
}

}  // namespace ditcond
