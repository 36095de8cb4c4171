#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "ditcond/compact.hpp"
#include "ditcond/harness.hpp"

using namespace ditcond;

TEST_CASE("compress a=1 is identity") {
    const Raster r = synthetic_raster(4, 6, 0);
    const Raster out = compress(r, {1});
    CHECK(out.px == r.px);
}

TEST_CASE("compress averages constant raster") {
    Raster r(4, 4, 0.5);
    const Raster out = compress(r, {2});
    CHECK(out.h == 2);
    CHECK(out.w == 2);
    for (double v : out.px) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("compress a=2 gives a 4:1 token reduction after embedding") {
    const Raster r = synthetic_raster(64, 64, 1);
    const int p = 2;
    const auto full = embed_raster(r, p, 16, 9);
    const auto compact = embed_raster(compress(r, {2}), p, 16, 9);
    CHECK(full.count() == 1024);
    CHECK(compact.count() == 256);
}

TEST_CASE("compress rejects indivisible dims and reports required padding") {
    Raster r(5, 4, 0.0);
    CHECK_THROWS_WITH_AS(compress(r, {2}), doctest::Contains("6x4"),
                         std::invalid_argument);
}

TEST_CASE("correct_positions substitution") {
    CHECK(correct_positions({{3, 5}}, 1) == std::vector<PositionIndex>{{3, 5}});
    CHECK(correct_positions({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, 2) ==
          std::vector<PositionIndex>{{0, 0}, {0, 2}, {2, 0}, {2, 2}});
    CHECK(correct_positions({{3, 5}}, 4) == std::vector<PositionIndex>{{12, 20}});
}

TEST_CASE("correct_positions composes multiplicatively") {
    const std::vector<PositionIndex> base = {{1, 2}, {3, 4}, {0, 7}};
    CHECK(correct_positions(correct_positions(base, 2), 3) ==
          correct_positions(base, 6));
}

TEST_CASE("prune tau=0 keeps everything") {
    const Raster r = synthetic_raster(8, 8, 2);
    const auto seg = embed_raster(r, 2, 8, 5);
    const auto out = prune(seg, r, 2, {0.0});
    CHECK(out.segment.count() == seg.count());
    CHECK_FALSE(out.all_pruned);
    CHECK(out.segment.positions == seg.positions);
}

TEST_CASE("prune on all-zero raster empties the segment with warning") {
    Raster r(4, 4, 0.0);
    const auto seg = embed_raster(r, 1, 8, 5);
    const auto out = prune(seg, r, 1, {0.01});
    CHECK(out.segment.count() == 0);
    CHECK(out.all_pruned);
}

TEST_CASE("prune retains exactly the nonzero patches of an edge fixture") {
    // 8x8 edge raster with 5 pixels set; p=1 so patches are pixels
    Raster r(8, 8, 0.0);
    const std::vector<PositionIndex> lit = {{0, 0}, {1, 3}, {4, 4}, {6, 2}, {7, 7}};
    for (const auto& p : lit) r.at(p.i, p.j) = 1.0;
    const auto seg = embed_raster(r, 1, 4, 17);
    const auto out = prune(seg, r, 1, {0.5});

    // oracle: direct patch scan
    std::vector<PositionIndex> expected;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            if (r.at(i, j) >= 0.5) expected.push_back({i, j});
    CHECK(out.segment.count() == 5);
    CHECK(out.segment.positions == expected);
}

TEST_CASE("prune is monotone in tau") {
    const Raster r = synthetic_raster(8, 8, 3);
    const auto seg = embed_raster(r, 2, 8, 5);
    auto kept_positions = [&](double tau) {
        std::set<std::pair<int, int>> s;
        for (const auto& p : prune(seg, r, 2, {tau}).segment.positions)
            s.insert({p.i, p.j});
        return s;
    };
    const auto lo = kept_positions(0.2);
    const auto hi = kept_positions(0.6);
    for (const auto& p : hi) CHECK(lo.count(p) == 1);
}

namespace {
TokenSegment grid_segment(int h, int w, std::size_t d, double fill) {
    TokenSegment s;
    s.kind = SegmentKind::Noisy;
    s.tokens = Matrix(static_cast<std::size_t>(h) * w, d, fill);
    s.positions = noisy_positions(h, w);
    return s;
}
}  // namespace

TEST_CASE("integrate with all-ones mask returns the noise tokens, none frozen") {
    const auto noise = grid_segment(2, 2, 4, 1.0);
    const auto cond = grid_segment(2, 2, 4, 2.0);
    const auto out = integrate(noise, cond, IntegrationMask(2, 2, 1));
    CHECK(out.tokens.data == noise.tokens.data);
    for (std::size_t t = 0; t < out.count(); ++t) CHECK_FALSE(out.is_frozen(t));
}

TEST_CASE("integrate single generated cell over 2x2") {
    const auto noise = grid_segment(2, 2, 4, 1.0);
    const auto cond = grid_segment(2, 2, 4, 2.0);
    IntegrationMask mask(2, 2, 0);
    mask.at(1, 0) = 1;
    const auto out = integrate(noise, cond, mask);
    CHECK(out.count() == 4);  // N, not 2N
    std::size_t frozen = 0;
    for (std::size_t t = 0; t < 4; ++t) frozen += out.is_frozen(t) ? 1 : 0;
    CHECK(frozen == 3);
    CHECK(out.tokens.at(2, 0) == 1.0);  // the generated cell carries noise
    CHECK(out.tokens.at(0, 0) == 2.0);  // frozen cells carry the condition
}

TEST_CASE("integrate count oracle on a random 16x16 mask") {
    const auto noise = grid_segment(16, 16, 4, 1.0);
    const auto cond = grid_segment(16, 16, 4, 2.0);
    IntegrationMask mask(16, 16, 0);
    std::mt19937_64 rng(99);
    std::vector<std::size_t> idx(256);
    for (std::size_t i = 0; i < 256; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < 100; ++i) mask.m[idx[i]] = 1;
    const auto out = integrate(noise, cond, mask);
    CHECK(out.count() == 256);
    std::size_t frozen = 0;
    for (std::size_t t = 0; t < 256; ++t) frozen += out.is_frozen(t) ? 1 : 0;
    CHECK(frozen == 256 - mask.ones());
    CHECK(frozen == 156);
}

TEST_CASE("integrate rejects mismatched grids") {
    CHECK_THROWS_AS(integrate(grid_segment(2, 2, 4, 1.0),
                              grid_segment(2, 3, 4, 2.0),
                              IntegrationMask(2, 2, 1)),
                    std::invalid_argument);
}

TEST_CASE("reassemble round-trip with identity pipeline") {
    const auto noise = grid_segment(4, 4, 8, 1.0);
    const auto cond = grid_segment(4, 4, 8, 2.0);
    IntegrationMask mask(4, 4, 0);
    mask.at(0, 0) = mask.at(3, 3) = 1;
    const auto merged = integrate(noise, cond, mask);
    // zero denoising steps: final sequence == merged
    const auto out = reassemble(merged, mask, cond);
    for (std::size_t t = 0; t < out.count(); ++t) {
        for (std::size_t c = 0; c < 8; ++c) {
            const double expect = mask.m[t] != 0 ? noise.tokens.at(t, c)
                                                 : cond.tokens.at(t, c);
            CHECK(out.tokens.at(t, c) == expect);
        }
    }
}
