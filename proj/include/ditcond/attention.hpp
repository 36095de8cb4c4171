#pragma once

// Multi-modal attention with 2D rotary positions, the asymmetric attention
// mask, and one-shot KV caching of the reusable (text + condition) block.

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ditcond/flops.hpp"
#include "ditcond/tensor.hpp"
#include "ditcond/tokens.hpp"

namespace ditcond {

enum class MaskMode : std::uint8_t { Full, Asymmetric };

struct MaskSpec {
    MaskMode mode = MaskMode::Full;
    Matrix bias;                     // N x N additive bias of {0, -inf}
    std::size_t noisy_count = 0;     // masked column range is [0, noisy_count)
    std::size_t reusable_start = 0;  // rows >= reusable_start are masked
};

// Asymmetric mode: rows of the reusable block cannot attend to noisy-segment
// columns; noisy rows keep their full attention pattern. When freeze_text is
// false the text segment stays outside the reusable block and is recomputed
// per step (reuse is then only approximate).
inline MaskSpec build_mask(const UnifiedSequence& layout, MaskMode mode,
                           bool freeze_text = true) {
    const std::size_t n = layout.total_tokens();
    MaskSpec spec;
    spec.mode = mode;
    spec.bias = Matrix(n, n, 0.0);
    spec.noisy_count = layout.noisy_count();
    spec.reusable_start = freeze_text
                              ? layout.noisy_count()
                              : layout.noisy_count() + layout.text_count();
    if (mode == MaskMode::Asymmetric) {
        constexpr double kNegInf = -std::numeric_limits<double>::infinity();
        for (std::size_t r = spec.reusable_start; r < n; ++r)
            for (std::size_t c = 0; c < spec.noisy_count; ++c)
                spec.bias.at(r, c) = kNegInf;
    }
    return spec;
}

struct AttentionWeights {
    Matrix wq, wk, wv, wo;  // all d x d
};

struct LayerKV {
    Matrix k;  // |R| x d, post-rotary
    Matrix v;  // |R| x d
};

struct KVCache {
    std::vector<LayerKV> layers;
    std::size_t reusable_rows = 0;
    bool populated = false;

    void begin_population(std::size_t layer_count, std::size_t rows) {
        if (populated) {
            throw std::logic_error("KVCache: already populated");
        }
        layers.assign(layer_count, LayerKV{});
        reusable_rows = rows;
    }
    void finish_population() { populated = true; }
};

namespace detail {

inline void apply_rope_rows(Matrix& m, const std::vector<PositionIndex>& pos,
                            std::size_t heads) {
    const std::size_t d_head = m.cols / heads;
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t h = 0; h < heads; ++h)
            rope2d_inplace(m.row_ptr(r) + h * d_head, d_head, pos[r]);
}

inline Matrix head_slice(const Matrix& m, std::size_t h, std::size_t d_head) {
    Matrix out(m.rows, d_head);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < d_head; ++c)
            out.at(r, c) = m.at(r, h * d_head + c);
    return out;
}

inline Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) out.at(c, r) = m.at(r, c);
    return out;
}

// Scaled dot-product attention for one head over precomputed rotary K/V.
// bias may be null (no mask).
inline void attend_head(const Matrix& q_h, const Matrix& k_h, const Matrix& v_h,
                        const Matrix* bias, std::size_t q_row_offset,
                        Matrix& out_concat, std::size_t h, std::size_t d_head,
                        flops::FlopCounter* fc) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
    Matrix scores = matmul(q_h, transpose(k_h));
    for (auto& s : scores.data) s *= scale;
    Matrix mask_rows(scores.rows, scores.cols, 0.0);
    if (bias != nullptr) {
        for (std::size_t r = 0; r < scores.rows; ++r)
            for (std::size_t c = 0; c < scores.cols; ++c)
                mask_rows.at(r, c) = bias->at(q_row_offset + r, c);
    }
    const Matrix probs = masked_softmax_rows(scores, mask_rows);
    const Matrix ctx = matmul(probs, v_h);
    for (std::size_t r = 0; r < ctx.rows; ++r)
        for (std::size_t c = 0; c < d_head; ++c)
            out_concat.at(r, h * d_head + c) = ctx.at(r, c);
    if (fc != nullptr) {
        const auto nq = static_cast<flops::count_t>(scores.rows);
        const auto nk = static_cast<flops::count_t>(scores.cols);
        const auto dh = static_cast<flops::count_t>(d_head);
        fc->attention_pairs += flops::matmul(nq, dh, nk);  // logits
        fc->attention_pairs += nq * nk;                    // scaling
        fc->attention_pairs += nq * flops::softmax_row(nk);
        fc->attention_pairs += flops::matmul(nq, nk, dh);  // weighted sum
    }
}

}  // namespace detail

// Full multi-modal attention over all N tokens. When cache_out is non-null,
// the post-rotary K and V rows of the reusable block are written into
// cache_out->layers[layer].
inline Matrix attend_full(const Matrix& tokens,
                          const std::vector<PositionIndex>& positions,
                          const AttentionWeights& w, std::size_t heads,
                          const MaskSpec& mask,
                          flops::FlopCounter* fc = nullptr,
                          KVCache* cache_out = nullptr, std::size_t layer = 0) {
    const std::size_t n = tokens.rows, d = tokens.cols;
    if (positions.size() != n) {
        throw std::invalid_argument("attend_full: positions length mismatch");
    }
    if (mask.bias.rows != n || mask.bias.cols != n) {
        throw std::invalid_argument("attend_full: mask shape mismatch");
    }
    const std::size_t d_head = d / heads;

    Matrix q = matmul(tokens, w.wq);
    Matrix k = matmul(tokens, w.wk);
    Matrix v = matmul(tokens, w.wv);
    detail::apply_rope_rows(q, positions, heads);
    detail::apply_rope_rows(k, positions, heads);
    if (fc != nullptr) {
        const auto nn = static_cast<flops::count_t>(n);
        const auto dd = static_cast<flops::count_t>(d);
        fc->token_independent += 3 * flops::matmul(nn, dd, dd);
        fc->token_independent +=
            2 * nn * static_cast<flops::count_t>(heads) *
            flops::rope(static_cast<flops::count_t>(d_head));
    }

    if (cache_out != nullptr) {
        const std::size_t rs = n - cache_out->reusable_rows;
        LayerKV& kv = cache_out->layers.at(layer);
        kv.k = Matrix(cache_out->reusable_rows, d);
        kv.v = Matrix(cache_out->reusable_rows, d);
        for (std::size_t r = rs; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                kv.k.at(r - rs, c) = k.at(r, c);
                kv.v.at(r - rs, c) = v.at(r, c);
            }
    }

    Matrix concat(n, d);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix q_h = detail::head_slice(q, h, d_head);
        const Matrix k_h = detail::head_slice(k, h, d_head);
        const Matrix v_h = detail::head_slice(v, h, d_head);
        detail::attend_head(q_h, k_h, v_h, &mask.bias, 0, concat, h, d_head, fc);
    }
    Matrix out = matmul(concat, w.wo);
    if (fc != nullptr) {
        fc->token_independent +=
            flops::matmul(static_cast<flops::count_t>(n),
                          static_cast<flops::count_t>(d),
                          static_cast<flops::count_t>(d));
    }
    return out;
}

// Attention for the recomputed rows only: Q/K/V are computed for x_tokens and
// the cached reusable-block K/V are appended as extra context columns.
inline Matrix attend_cached(const Matrix& x_tokens,
                            const std::vector<PositionIndex>& x_positions,
                            const AttentionWeights& w, std::size_t heads,
                            const KVCache& cache, std::size_t layer,
                            flops::FlopCounter* fc = nullptr) {
    if (!cache.populated) {
        throw std::logic_error("attend_cached: cache not populated");
    }
    const std::size_t nx = x_tokens.rows, d = x_tokens.cols;
    if (x_positions.size() != nx) {
        throw std::invalid_argument("attend_cached: positions length mismatch");
    }
    const std::size_t d_head = d / heads;
    const LayerKV& kv = cache.layers.at(layer);
    const std::size_t nr = cache.reusable_rows;

    Matrix q = matmul(x_tokens, w.wq);
    Matrix k_x = matmul(x_tokens, w.wk);
    Matrix v_x = matmul(x_tokens, w.wv);
    detail::apply_rope_rows(q, x_positions, heads);
    detail::apply_rope_rows(k_x, x_positions, heads);
    if (fc != nullptr) {
        const auto nn = static_cast<flops::count_t>(nx);
        const auto dd = static_cast<flops::count_t>(d);
        fc->token_independent += 3 * flops::matmul(nn, dd, dd);
        fc->token_independent +=
            2 * nn * static_cast<flops::count_t>(heads) *
            flops::rope(static_cast<flops::count_t>(d_head));
    }

    // Keys/values in full-sequence order: recomputed rows first, cached block after.
    Matrix k_all(nx + nr, d), v_all(nx + nr, d);
    for (std::size_t r = 0; r < nx; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            k_all.at(r, c) = k_x.at(r, c);
            v_all.at(r, c) = v_x.at(r, c);
        }
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            k_all.at(nx + r, c) = kv.k.at(r, c);
            v_all.at(nx + r, c) = kv.v.at(r, c);
        }

    Matrix concat(nx, d);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix q_h = detail::head_slice(q, h, d_head);
        const Matrix k_h = detail::head_slice(k_all, h, d_head);
        const Matrix v_h = detail::head_slice(v_all, h, d_head);
        detail::attend_head(q_h, k_h, v_h, nullptr, 0, concat, h, d_head, fc);
    }
    Matrix out = matmul(concat, w.wo);
    if (fc != nullptr) {
        fc->token_independent +=
            flops::matmul(static_cast<flops::count_t>(nx),
                          static_cast<flops::count_t>(d),
                          static_cast<flops::count_t>(d));
    }
    return out;
}

}  // namespace ditcond
