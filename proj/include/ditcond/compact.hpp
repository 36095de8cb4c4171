#pragma once

// Compact condition representation: area-average compression with position
// correcting, relevance-based token pruning, and mask-based token integration
// for inpainting.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ditcond/raster.hpp"
#include "ditcond/tokens.hpp"

namespace ditcond {

struct CompressionSpec {
    int a = 1;  // per-axis compression factor
};

struct PruneSpec {
    double tau = 0.0;  // relevance threshold in [0,1]; 0 keeps everything
};

// Area-average downsample by a per axis; token count after patch embedding
// shrinks a^2:1.
inline Raster compress(const Raster& in, const CompressionSpec& spec) {
    const int a = spec.a;
    if (a < 1) throw std::invalid_argument("compress: factor must be >= 1");
    if (a == 1) return in;
    if (in.h % a != 0 || in.w % a != 0) {
        throw std::invalid_argument(
            "compress: raster " + std::to_string(in.h) + "x" +
            std::to_string(in.w) + " not divisible by " + std::to_string(a) +
            "; pad to " + std::to_string((in.h + a - 1) / a * a) + "x" +
            std::to_string((in.w + a - 1) / a * a));
    }
    Raster out(in.h / a, in.w / a);
    const double inv = 1.0 / (static_cast<double>(a) * a);
    for (int i = 0; i < out.h; ++i) {
        for (int j = 0; j < out.w; ++j) {
            double acc = 0.0;
            for (int di = 0; di < a; ++di)
                for (int dj = 0; dj < a; ++dj)
                    acc += in.at(i * a + di, j * a + dj);
            out.at(i, j) = acc * inv;
        }
    }
    return out;
}

// (i,j) -> (a*i, a*j): each compressed token keeps pointing at its target
// region in the full-resolution grid.
inline std::vector<PositionIndex> correct_positions(
    std::vector<PositionIndex> positions, int a) {
    if (a < 1) throw std::invalid_argument("correct_positions: factor must be >= 1");
    for (auto& p : positions) {
        p.i *= a;
        p.j *= a;
    }
    return positions;
}

// Non-overlapping p x p patch flattening followed by a fixed seeded random
// projection to d. Stands in for a VAE encoder; preserves spatial structure
// and is fully deterministic.
inline TokenSegment embed_raster(const Raster& raster, int p, std::size_t d,
                                 std::uint64_t seed,
                                 SegmentKind kind = SegmentKind::ImageCond) {
    if (p < 1) throw std::invalid_argument("embed_raster: patch size must be >= 1");
    if (raster.h % p != 0 || raster.w % p != 0) {
        throw std::invalid_argument("embed_raster: raster dims not divisible by patch size");
    }
    const int gh = raster.h / p, gw = raster.w / p;
    const std::size_t pp = static_cast<std::size_t>(p) * p;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix proj(pp, d);
    for (auto& x : proj.data) x = dist(rng);

    TokenSegment seg;
    seg.kind = kind;
    seg.tokens = Matrix(static_cast<std::size_t>(gh) * gw, d);
    seg.positions = noisy_positions(gh, gw);
    std::size_t row = 0;
    for (int gi = 0; gi < gh; ++gi) {
        for (int gj = 0; gj < gw; ++gj, ++row) {
            for (std::size_t c = 0; c < d; ++c) {
                double acc = 0.0;
                std::size_t k = 0;
                for (int di = 0; di < p; ++di)
                    for (int dj = 0; dj < p; ++dj, ++k)
                        acc += raster.at(gi * p + di, gj * p + dj) * proj.at(k, c);
                seg.tokens.at(row, c) = acc;
            }
        }
    }
    return seg;
}

// Relevance of a token's source patch: mean absolute intensity, already in
// [0,1] for normalized rasters.
inline std::vector<double> patch_relevance(const Raster& raster, int p) {
    if (raster.h % p != 0 || raster.w % p != 0) {
        throw std::invalid_argument("patch_relevance: raster dims not divisible by patch size");
    }
    const int gh = raster.h / p, gw = raster.w / p;
    std::vector<double> rel;
    rel.reserve(static_cast<std::size_t>(gh) * gw);
    const double inv = 1.0 / (static_cast<double>(p) * p);
    for (int gi = 0; gi < gh; ++gi) {
        for (int gj = 0; gj < gw; ++gj) {
            double acc = 0.0;
            for (int di = 0; di < p; ++di)
                for (int dj = 0; dj < p; ++dj)
                    acc += std::abs(raster.at(gi * p + di, gj * p + dj));
            rel.push_back(acc * inv);
        }
    }
    return rel;
}

struct PruneResult {
    TokenSegment segment;
    bool all_pruned = false;  // degenerate but legal: unconditioned run
};

// Drops tokens whose patch relevance is below tau. Retained tokens keep their
// original position indices and relative order.
inline PruneResult prune(const TokenSegment& segment, const Raster& raster,
                         int p, const PruneSpec& spec) {
    const auto rel = patch_relevance(raster, p);
    if (rel.size() != segment.count()) {
        throw std::invalid_argument(
            "prune: raster patches (" + std::to_string(rel.size()) +
            ") do not align with segment tokens (" +
            std::to_string(segment.count()) + ")");
    }
    PruneResult out;
    out.segment.kind = segment.kind;
    out.segment.cond_ordinal = segment.cond_ordinal;
    std::vector<std::size_t> keep;
    for (std::size_t t = 0; t < rel.size(); ++t) {
        if (rel[t] >= spec.tau) keep.push_back(t);
    }
    out.segment.tokens = Matrix(keep.size(), segment.tokens.cols);
    for (std::size_t r = 0; r < keep.size(); ++r) {
        for (std::size_t c = 0; c < segment.tokens.cols; ++c)
            out.segment.tokens.at(r, c) = segment.tokens.at(keep[r], c);
        out.segment.positions.push_back(segment.positions[keep[r]]);
    }
    out.all_pruned = keep.empty() && segment.count() > 0;
    return out;
}

// Merge noise and condition tokens over the same grid into a single N-token
// segment: mask=1 cells carry the noise token, mask=0 cells carry the frozen
// condition token.
inline TokenSegment integrate(const TokenSegment& noise_tokens,
                              const TokenSegment& cond_tokens,
                              const IntegrationMask& mask) {
    const std::size_t n = static_cast<std::size_t>(mask.h) * mask.w;
    if (noise_tokens.count() != n || cond_tokens.count() != n) {
        throw std::invalid_argument("integrate: grid/mask dimension mismatch");
    }
    if (noise_tokens.positions != cond_tokens.positions) {
        throw std::invalid_argument("integrate: noise and condition positions differ");
    }
    TokenSegment out;
    out.kind = SegmentKind::Noisy;
    out.tokens = Matrix(n, noise_tokens.tokens.cols);
    out.positions = noise_tokens.positions;
    out.frozen.assign(n, 0);
    for (std::size_t t = 0; t < n; ++t) {
        const bool generate = mask.m[t] != 0;
        const TokenSegment& src = generate ? noise_tokens : cond_tokens;
        for (std::size_t c = 0; c < out.tokens.cols; ++c)
            out.tokens.at(t, c) = src.tokens.at(t, c);
        out.frozen[t] = generate ? 0 : 1;
    }
    return out;
}

// Final assembly after an inpainting run: mask=0 cells are taken verbatim
// from the original condition latents.
inline TokenSegment reassemble(const TokenSegment& final_sequence,
                               const IntegrationMask& mask,
                               const TokenSegment& original_cond) {
    const std::size_t n = static_cast<std::size_t>(mask.h) * mask.w;
    if (final_sequence.count() != n || original_cond.count() != n) {
        throw std::invalid_argument("reassemble: grid/mask dimension mismatch");
    }
    TokenSegment out;
    out.kind = SegmentKind::Noisy;
    out.tokens = Matrix(n, final_sequence.tokens.cols);
    out.positions = final_sequence.positions;
    for (std::size_t t = 0; t < n; ++t) {
        const TokenSegment& src = mask.m[t] != 0 ? final_sequence : original_cond;
        for (std::size_t c = 0; c < out.tokens.cols; ++c)
            out.tokens.at(t, c) = src.tokens.at(t, c);
    }
    return out;
}

}  // namespace ditcond
