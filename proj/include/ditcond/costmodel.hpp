#pragma once

// Analytic FLOP model of the block stack and the condition-overhead speedup
// algebra. The closed forms compose the same per-op formulas the instrumented
// forward pass uses, so analytic and measured counts match as integers.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "ditcond/flops.hpp"

namespace ditcond {

struct CostInputs {
    flops::count_t steps = 1;        // n
    flops::count_t x_tokens = 0;     // |X|
    flops::count_t text_tokens = 0;  // |C_T|
    flops::count_t cond_tokens = 0;  // |C_I| before compaction
    flops::count_t d = 64;
    flops::count_t layers = 4;
    flops::count_t heads = 4;
    flops::count_t mlp_ratio = 4;
    double r = 1.0;  // retained condition-token fraction

    flops::count_t cond_effective(bool compact) const {
        if (!compact) return cond_tokens;
        return static_cast<flops::count_t>(
            std::floor(r * static_cast<double>(cond_tokens)));
    }

    void validate() const {
        if (steps < 1) throw std::invalid_argument("CostInputs: steps must be >= 1");
        if (r <= 0.0 || r > 1.0) {
            throw std::invalid_argument("CostInputs: r must be in (0, 1]");
        }
    }
};

namespace costmodel {

// c1: token-independent FLOPs per token per layer
inline flops::count_t per_token_layer(flops::count_t d, flops::count_t heads,
                                      flops::count_t mlp_ratio) {
    const flops::count_t d_head = d / heads;
    const flops::count_t hidden = mlp_ratio * d;
    return 2 * (flops::rms_norm(d) + flops::modulate(d))  // two norm+modulate
           + 3 * flops::matmul(1, d, d)                   // QKV projections
           + 2 * heads * flops::rope(d_head)              // rotary on Q and K
           + flops::matmul(1, d, d)                       // output projection
           + 2 * flops::residual(d)                       // two residual adds
           + flops::matmul(1, d, hidden)                  // MLP in
           + hidden * flops::activation_elem()            // activation
           + flops::matmul(1, hidden, d);                 // MLP out
}

// c2: attention FLOPs per (query, key) token pair per layer
inline flops::count_t per_pair_layer(flops::count_t d, flops::count_t heads) {
    const flops::count_t d_head = d / heads;
    return heads * (flops::matmul(1, d_head, 1)    // logit dot product
                    + 1                            // scaling
                    + 4                            // softmax share per element
                    + flops::matmul(1, 1, d_head)  // weighted sum
                   );
}

inline flops::count_t per_noisy_token_head(flops::count_t d) {
    return flops::rms_norm(d) + flops::modulate(d) + flops::matmul(1, d, d);
}

struct StepFlops {
    flops::count_t token_independent = 0;
    flops::count_t attention = 0;
    flops::count_t c1 = 0;  // per-token constant used
    flops::count_t c2 = 0;  // per-pair constant used
};

// One forward pass of the L-layer stack over N tokens (velocity head excluded;
// it is linear in |X| and reported separately).
inline StepFlops flops_step(flops::count_t tokens, const CostInputs& in) {
    if (tokens < 1) throw std::invalid_argument("flops_step: N must be >= 1");
    StepFlops out;
    out.c1 = in.layers * per_token_layer(in.d, in.heads, in.mlp_ratio);
    out.c2 = in.layers * per_pair_layer(in.d, in.heads);
    out.token_independent = out.c1 * tokens;
    out.attention = out.c2 * tokens * tokens;
    return out;
}

struct RunFlops {
    flops::count_t token_independent = 0;
    flops::count_t attention = 0;
    flops::count_t head = 0;
    flops::count_t total() const { return token_independent + attention + head; }
};

// Whole-run totals for a denoise loop over n steps. With reuse, step 1 runs
// the full stack and steps 2..n recompute only the |X| noisy rows, attending
// to N cached+fresh key columns.
inline RunFlops run_flops(const CostInputs& in, flops::count_t cond_now,
                          bool reuse) {
    const flops::count_t n_total = in.x_tokens + in.text_tokens + cond_now;
    const flops::count_t c1 = in.layers * per_token_layer(in.d, in.heads, in.mlp_ratio);
    const flops::count_t c2 = in.layers * per_pair_layer(in.d, in.heads);
    RunFlops out;
    out.head = in.steps * in.x_tokens * per_noisy_token_head(in.d);
    if (!reuse) {
        out.token_independent = in.steps * c1 * n_total;
        out.attention = in.steps * c2 * n_total * n_total;
    } else {
        out.token_independent = c1 * n_total + (in.steps - 1) * c1 * in.x_tokens;
        out.attention = c2 * n_total * n_total +
                        (in.steps - 1) * c2 * in.x_tokens * n_total;
    }
    return out;
}

struct OverheadFlops {
    flops::count_t token_independent = 0;
    flops::count_t attention = 0;
    flops::count_t total() const { return token_independent + attention; }
};

// Condition overhead = total run FLOPs minus the same run with |C_I| = 0.
inline OverheadFlops condition_overhead(const CostInputs& in, bool compact,
                                        bool reuse) {
    in.validate();
    const flops::count_t cond = in.cond_effective(compact);
    const RunFlops with_cond = run_flops(in, cond, reuse);
    const RunFlops without = run_flops(in, 0, reuse);
    OverheadFlops out;
    out.token_independent = with_cond.token_independent - without.token_independent;
    out.attention = with_cond.attention - without.attention;
    return out;
}

struct SpeedupReport {
    double alpha_compact = 1.0;
    double alpha_reuse = 1.0;
    double alpha_total = 1.0;
    flops::count_t flops_baseline = 0;
    flops::count_t flops_optimized = 0;
    flops::count_t condition_overhead_baseline = 0;
    flops::count_t condition_overhead_optimized = 0;
};

inline SpeedupReport speedups(const CostInputs& in) {
    in.validate();
    SpeedupReport rep;
    rep.alpha_compact = 1.0 / in.r;
    rep.alpha_reuse = static_cast<double>(in.steps);
    rep.alpha_total = static_cast<double>(in.steps) / in.r;
    rep.flops_baseline = run_flops(in, in.cond_tokens, false).total();
    rep.flops_optimized = run_flops(in, in.cond_effective(true), true).total();
    rep.condition_overhead_baseline = condition_overhead(in, false, false).total();
    rep.condition_overhead_optimized = condition_overhead(in, true, true).total();
    return rep;
}

struct OverheadReduction {
    double token_independent = 0.0;  // gated term
    double total = 0.0;              // including attention cross terms
};

inline OverheadReduction overhead_reduction(const CostInputs& in, bool compact,
                                            bool reuse) {
    const OverheadFlops base = condition_overhead(in, false, false);
    const OverheadFlops opt = condition_overhead(in, compact, reuse);
    if (base.total() == 0) {
        throw std::invalid_argument("overhead_reduction: zero baseline overhead");
    }
    OverheadReduction out;
    out.token_independent =
        1.0 - static_cast<double>(opt.token_independent) /
                  static_cast<double>(base.token_independent);
    out.total = 1.0 - static_cast<double>(opt.total()) /
                          static_cast<double>(base.total());
    return out;
}

}  // namespace costmodel
}  // namespace ditcond
