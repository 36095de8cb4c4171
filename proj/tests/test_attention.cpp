#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ditcond/attention.hpp"
#include "ditcond/costmodel.hpp"

using namespace ditcond;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng,
                     double scale = 0.5) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Matrix m(r, c);
    for (auto& x : m.data) x = dist(rng);
    return m;
}

AttentionWeights random_weights(std::size_t d, std::mt19937_64& rng) {
    return {random_matrix(d, d, rng), random_matrix(d, d, rng),
            random_matrix(d, d, rng), random_matrix(d, d, rng)};
}

double max_diff(const Matrix& a, const Matrix& b) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        mx = std::max(mx, std::abs(a.data[i] - b.data[i]));
    return mx;
}

// Independent direct-formula oracle: per-row vector arithmetic, explicit
// exp/sum softmax, no shared matmul path.
Matrix attention_oracle(const Matrix& tokens,
                        const std::vector<PositionIndex>& pos,
                        const AttentionWeights& w, std::size_t heads,
                        const Matrix* bias) {
    const std::size_t n = tokens.rows, d = tokens.cols, dh = d / heads;
    auto project = [&](const Matrix& weight, std::size_t row) {
        std::vector<double> out(d, 0.0);
        for (std::size_t c = 0; c < d; ++c)
            for (std::size_t k = 0; k < d; ++k)
                out[c] += tokens.at(row, k) * weight.at(k, c);
        return out;
    };
    Matrix concat(n, d);
    for (std::size_t h = 0; h < heads; ++h) {
        std::vector<std::vector<double>> q(n), k(n), v(n);
        for (std::size_t r = 0; r < n; ++r) {
            auto qr = project(w.wq, r), kr = project(w.wk, r), vr = project(w.wv, r);
            q[r] = rope2d({qr.begin() + h * dh, qr.begin() + (h + 1) * dh}, pos[r]);
            k[r] = rope2d({kr.begin() + h * dh, kr.begin() + (h + 1) * dh}, pos[r]);
            v[r].assign(vr.begin() + h * dh, vr.begin() + (h + 1) * dh);
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> weights_row(n, 0.0);
            double denom = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (bias != nullptr &&
                    bias->at(i, j) == -std::numeric_limits<double>::infinity()) {
                    continue;
                }
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += q[i][c] * k[j][c];
                weights_row[j] = std::exp(s / std::sqrt(static_cast<double>(dh)));
                denom += weights_row[j];
            }
            for (std::size_t c = 0; c < dh; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    acc += weights_row[j] / denom * v[j][c];
                concat.at(i, h * dh + c) = acc;
            }
        }
    }
    Matrix out(n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c)
            for (std::size_t k2 = 0; k2 < d; ++k2)
                out.at(r, c) += concat.at(r, k2) * w.wo.at(k2, c);
    return out;
}

struct TinyLayout {
    UnifiedSequence seq;
};

UnifiedSequence tiny_layout(std::size_t nx, std::size_t nt, std::size_t nc,
                            std::size_t d) {
    TokenSegment noisy;
    noisy.kind = SegmentKind::Noisy;
    noisy.tokens = Matrix(nx, d, 0.1);
    noisy.positions.assign(nx, PositionIndex{0, 0});
    TokenSegment text;
    text.kind = SegmentKind::Text;
    text.tokens = Matrix(nt, d, 0.1);
    text.positions.assign(nt, PositionIndex{0, 0});
    std::vector<TokenSegment> conds;
    if (nc > 0) {
        TokenSegment c;
        c.kind = SegmentKind::ImageCond;
        c.tokens = Matrix(nc, d, 0.1);
        c.positions.assign(nc, PositionIndex{0, 0});
        conds.push_back(std::move(c));
    }
    return build_sequence(std::move(noisy), std::move(text), std::move(conds));
}

}  // namespace

TEST_CASE("full mask is all zeros") {
    const auto seq = tiny_layout(2, 1, 1, 8);
    const MaskSpec m = build_mask(seq, MaskMode::Full);
    for (double v : m.bias.data) CHECK(v == 0.0);
}

TEST_CASE("asymmetric mask structure on a tiny layout") {
    const auto seq = tiny_layout(2, 1, 1, 8);
    const MaskSpec m = build_mask(seq, MaskMode::Asymmetric);
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            const bool masked = r >= 2 && c < 2;
            CHECK(m.bias.at(r, c) == (masked ? -inf : 0.0));
        }
}

TEST_CASE("asymmetric mask count on a large layout") {
    const auto seq = tiny_layout(1024, 512, 1024, 8);
    CHECK(seq.total_tokens() == 2560);
    const MaskSpec m = build_mask(seq, MaskMode::Asymmetric);
    std::size_t masked = 0;
    for (double v : m.bias.data)
        if (v == -std::numeric_limits<double>::infinity()) ++masked;
    CHECK(masked == 1536 * 1024);
}

TEST_CASE("single-token attention reduces to V*Wo") {
    std::mt19937_64 rng(1);
    const std::size_t d = 8;
    const auto w = random_weights(d, rng);
    const Matrix tokens = random_matrix(1, d, rng);
    const MaskSpec mask{MaskMode::Full, Matrix(1, 1, 0.0), 1, 1};
    const Matrix out = attend_full(tokens, {{2, 3}}, w, 2, mask);
    const Matrix expect = matmul(matmul(tokens, w.wv), w.wo);
    CHECK(max_diff(out, expect) <= 1e-12);
}

TEST_CASE("attend_full matches the direct-formula oracle") {
    std::mt19937_64 rng(2);
    const std::size_t d = 8, heads = 2;
    const auto w = random_weights(d, rng);
    const Matrix tokens = random_matrix(3, d, rng);
    const std::vector<PositionIndex> pos = {{0, 0}, {0, 1}, {1, 0}};
    const MaskSpec mask{MaskMode::Full, Matrix(3, 3, 0.0), 3, 3};
    CHECK(max_diff(attend_full(tokens, pos, w, heads, mask),
                   attention_oracle(tokens, pos, w, heads, nullptr)) <= 1e-12);
}

TEST_CASE("attend_full matches the oracle under the asymmetric mask") {
    std::mt19937_64 rng(3);
    const std::size_t d = 8, heads = 2;
    const auto seq = tiny_layout(3, 2, 2, d);
    const auto w = random_weights(d, rng);
    const Matrix tokens = random_matrix(7, d, rng);
    const auto pos = seq.flat_positions();
    const MaskSpec mask = build_mask(seq, MaskMode::Asymmetric);
    CHECK(max_diff(attend_full(tokens, pos, w, heads, mask),
                   attention_oracle(tokens, pos, w, heads, &mask.bias)) <= 1e-12);
}

TEST_CASE("asymmetric mask makes reusable rows blind to noisy values") {
    std::mt19937_64 rng(4);
    const std::size_t d = 8, heads = 2, nx = 3;
    const auto seq = tiny_layout(nx, 2, 2, d);
    const auto w = random_weights(d, rng);
    const auto pos = seq.flat_positions();
    const MaskSpec mask = build_mask(seq, MaskMode::Asymmetric);

    Matrix tokens = random_matrix(7, d, rng);
    const Matrix out1 = attend_full(tokens, pos, w, heads, mask);
    for (std::size_t r = 0; r < nx; ++r)
        for (std::size_t c = 0; c < d; ++c) tokens.at(r, c) += 3.0;
    const Matrix out2 = attend_full(tokens, pos, w, heads, mask);

    for (std::size_t r = nx; r < 7; ++r)
        for (std::size_t c = 0; c < d; ++c)
            CHECK(std::abs(out1.at(r, c) - out2.at(r, c)) <= 1e-12);

    // full mode is sensitive: the same perturbation must move reusable rows
    const MaskSpec full = build_mask(seq, MaskMode::Full);
    const Matrix f2 = attend_full(tokens, pos, w, heads, full);
    Matrix tokens0 = tokens;
    for (std::size_t r = 0; r < nx; ++r)
        for (std::size_t c = 0; c < d; ++c) tokens0.at(r, c) -= 3.0;
    const Matrix f1 = attend_full(tokens0, pos, w, heads, full);
    double reusable_diff = 0.0;
    for (std::size_t r = nx; r < 7; ++r)
        for (std::size_t c = 0; c < d; ++c)
            reusable_diff = std::max(reusable_diff,
                                     std::abs(f1.at(r, c) - f2.at(r, c)));
    CHECK(reusable_diff > 0.0);
}

TEST_CASE("attend_cached with empty reusable block equals self-attention") {
    std::mt19937_64 rng(5);
    const std::size_t d = 8, heads = 2;
    const auto w = random_weights(d, rng);
    const Matrix x = random_matrix(4, d, rng);
    const std::vector<PositionIndex> pos = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};

    KVCache cache;
    cache.begin_population(1, 0);
    cache.layers[0].k = Matrix(0, d);
    cache.layers[0].v = Matrix(0, d);
    cache.finish_population();

    const MaskSpec mask{MaskMode::Full, Matrix(4, 4, 0.0), 4, 4};
    CHECK(max_diff(attend_cached(x, pos, w, heads, cache, 0),
                   attend_full(x, pos, w, heads, mask)) <= 1e-12);
}

TEST_CASE("attend_cached equals the noisy-row slice of masked attend_full") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t d = 8, heads = 2, nx = 3;
        const auto seq = tiny_layout(nx, 2, 2, d);
        const auto w = random_weights(d, rng);
        const Matrix tokens = random_matrix(7, d, rng);
        const auto pos = seq.flat_positions();
        const MaskSpec mask = build_mask(seq, MaskMode::Asymmetric);

        KVCache cache;
        cache.begin_population(1, 4);
        const Matrix full = attend_full(tokens, pos, w, heads, mask, nullptr,
                                        &cache, 0);
        cache.finish_population();

        Matrix x(nx, d);
        for (std::size_t r = 0; r < nx; ++r)
            for (std::size_t c = 0; c < d; ++c) x.at(r, c) = tokens.at(r, c);
        const std::vector<PositionIndex> xpos(pos.begin(), pos.begin() + nx);
        const Matrix cached = attend_cached(x, xpos, w, heads, cache, 0);
        for (std::size_t r = 0; r < nx; ++r)
            for (std::size_t c = 0; c < d; ++c)
                CHECK(std::abs(cached.at(r, c) - full.at(r, c)) <= 1e-10);
    }
}

TEST_CASE("cache stores post-rotary K/V identical to a fresh pass") {
    std::mt19937_64 rng(6);
    const std::size_t d = 8, heads = 2, nx = 3, nr = 4;
    const auto seq = tiny_layout(nx, 2, 2, d);
    const auto w = random_weights(d, rng);
    const Matrix tokens = random_matrix(7, d, rng);
    const auto pos = seq.flat_positions();
    const MaskSpec mask = build_mask(seq, MaskMode::Asymmetric);

    KVCache c1, c2;
    c1.begin_population(1, nr);
    attend_full(tokens, pos, w, heads, mask, nullptr, &c1, 0);
    c1.finish_population();
    c2.begin_population(1, nr);
    attend_full(tokens, pos, w, heads, mask, nullptr, &c2, 0);
    c2.finish_population();

    CHECK(c1.layers[0].k.data == c2.layers[0].k.data);
    CHECK(c1.layers[0].v.data == c2.layers[0].v.data);
    CHECK(c1.layers[0].k.data.size() + c1.layers[0].v.data.size() == 2 * nr * d);

    CHECK_THROWS_AS(c1.begin_population(1, nr), std::logic_error);
}

TEST_CASE("unpopulated cache rejected") {
    std::mt19937_64 rng(7);
    const std::size_t d = 8;
    const auto w = random_weights(d, rng);
    const Matrix x = random_matrix(1, d, rng);
    KVCache cache;
    CHECK_THROWS_AS(attend_cached(x, {{0, 0}}, w, 2, cache, 0),
                    std::logic_error);
}

TEST_CASE("flop counter attributes no projection work to the cached block") {
    std::mt19937_64 rng(8);
    const std::size_t d = 8, heads = 2, nx = 3, nr = 4, n = nx + nr;
    const auto seq = tiny_layout(nx, 2, 2, d);
    const auto w = random_weights(d, rng);
    const Matrix tokens = random_matrix(n, d, rng);
    const auto pos = seq.flat_positions();
    const MaskSpec mask = build_mask(seq, MaskMode::Asymmetric);

    KVCache cache;
    cache.begin_population(1, nr);
    attend_full(tokens, pos, w, heads, mask, nullptr, &cache, 0);
    cache.finish_population();

    Matrix x(nx, d);
    for (std::size_t r = 0; r < nx; ++r)
        for (std::size_t c = 0; c < d; ++c) x.at(r, c) = tokens.at(r, c);
    const std::vector<PositionIndex> xpos(pos.begin(), pos.begin() + nx);
    flops::FlopCounter fc;
    attend_cached(x, xpos, w, heads, cache, 0, &fc);

    // projections/rotary sized by |X| only
    const auto dh = static_cast<flops::count_t>(d / heads);
    const flops::count_t expected_ti =
        4 * flops::matmul(nx, d, d) + 2 * nx * heads * flops::rope(dh);
    CHECK(fc.token_independent == expected_ti);
    // attention pairs sized by |X| * (|X| + |R|)
    const flops::count_t per_pair = costmodel::per_pair_layer(d, heads);
    CHECK(fc.attention_pairs == per_pair * nx * n);
}
