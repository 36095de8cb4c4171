#pragma once

// Integer FLOP accounting. The per-op formulas here are the single source of
// truth: the instrumented forward pass and the analytic cost model both call
// them, so the two agree by construction.
//
// Convention: one multiply-accumulate = 2 FLOPs. Transcendentals are counted
// as fixed constants per element (exp in softmax = 1, rotary pair = 6,
// activation = 4). Mask-bias addition is not counted.

#include <cstdint>

namespace ditcond::flops {

using count_t = std::int64_t;

constexpr count_t matmul(count_t m, count_t k, count_t n) {
    return 2 * m * k * n;
}

// mean of squares (2d) + eps/sqrt/div (3) + d scales
constexpr count_t rms_norm(count_t d) { return 3 * d + 3; }

// elementwise scale + shift
constexpr count_t modulate(count_t d) { return 2 * d; }

// pairwise rotation: 4 mul + 2 add per pair, d_head/2 pairs per vector
constexpr count_t rope(count_t d_head) { return 3 * d_head; }

// per element: subtract max, exp, accumulate, divide
constexpr count_t softmax_row(count_t len) { return 4 * len; }

constexpr count_t residual(count_t d) { return d; }

// silu: x * sigmoid(x), per element
constexpr count_t activation_elem() { return 4; }

struct FlopCounter {
    count_t token_independent = 0;  // projections, MLPs, norms, rotary
    count_t attention_pairs = 0;    // logits, scaling, softmax, weighted sum
    count_t output_head = 0;        // final norm + velocity projection

    count_t total() const {
        return token_independent + attention_pairs + output_head;
    }
    void reset() { *this = FlopCounter{}; }
};

}  // namespace ditcond::flops
