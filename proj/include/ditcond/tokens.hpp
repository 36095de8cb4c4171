#pragma once

// Unified token sequence: one noisy segment, one text segment, and any number
// of image-condition segments, concatenated in that order. Each token carries
// a 2D latent-grid position index.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ditcond/tensor.hpp"

namespace ditcond {

enum class SegmentKind : std::uint8_t { Noisy, Text, ImageCond };

struct TokenSegment {
    SegmentKind kind = SegmentKind::Noisy;
    int cond_ordinal = 0;  // meaningful for ImageCond only
    Matrix tokens;         // count x d
    std::vector<PositionIndex> positions;
    std::vector<std::uint8_t> frozen;  // per token; exempt from denoising updates

    std::size_t count() const { return tokens.rows; }

    void validate() const {
        if (positions.size() != tokens.rows) {
            throw std::invalid_argument(
                "TokenSegment: positions length != token count");
        }
        if (!frozen.empty() && frozen.size() != tokens.rows) {
            throw std::invalid_argument(
                "TokenSegment: frozen flags length != token count");
        }
    }

    bool is_frozen(std::size_t t) const {
        return !frozen.empty() && frozen[t] != 0;
    }
};

inline std::vector<PositionIndex> noisy_positions(int h, int w) {
    if (h < 1 || w < 1) {
        throw std::invalid_argument("noisy_positions: grid dimensions must be >= 1");
    }
    std::vector<PositionIndex> out;
    out.reserve(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) out.push_back({i, j});
    return out;
}

// Text tokens all sit at the fixed index (0,0).
inline std::vector<PositionIndex> text_positions(std::size_t count) {
    return std::vector<PositionIndex>(count, PositionIndex{0, 0});
}

struct Aligned {};
struct Offset {
    int di = 0;
    int dj = 0;
};
using Placement = std::variant<Aligned, Offset>;

inline std::vector<PositionIndex> condition_positions(int h, int w,
                                                      const Placement& placement) {
    auto base = noisy_positions(h, w);
    if (const auto* off = std::get_if<Offset>(&placement)) {
        if (off->di < 0 || off->dj < 0) {
            throw std::invalid_argument("condition_positions: negative offset");
        }
        for (auto& p : base) {
            p.i += off->di;
            p.j += off->dj;
        }
    }
    return base;
}

class UnifiedSequence {
public:
    UnifiedSequence(TokenSegment noisy, TokenSegment text,
                    std::vector<TokenSegment> conds) {
        if (noisy.kind != SegmentKind::Noisy || text.kind != SegmentKind::Text) {
            throw std::invalid_argument(
                "UnifiedSequence: segment kinds must match slot order");
        }
        d_ = noisy.tokens.cols;
        segments_.push_back(std::move(noisy));
        segments_.push_back(std::move(text));
        for (auto& c : conds) {
            if (c.kind != SegmentKind::ImageCond) {
                throw std::invalid_argument(
                    "UnifiedSequence: condition slot holds a non-condition segment");
            }
            segments_.push_back(std::move(c));
        }
        std::size_t off = 0;
        for (const auto& s : segments_) {
            s.validate();
            if (s.tokens.cols != d_) {
                throw std::invalid_argument(
                    "UnifiedSequence: embedding dim mismatch (" +
                    std::to_string(s.tokens.cols) + " vs " + std::to_string(d_) +
                    ")");
            }
            offsets_.push_back(off);
            off += s.count();
        }
        total_ = off;
    }

    std::size_t dim() const { return d_; }
    std::size_t total_tokens() const { return total_; }
    std::size_t segment_count() const { return segments_.size(); }
    const TokenSegment& segment(std::size_t idx) const { return segments_[idx]; }
    std::size_t segment_offset(std::size_t idx) const { return offsets_[idx]; }

    const TokenSegment& noisy() const { return segments_[0]; }
    const TokenSegment& text() const { return segments_[1]; }
    std::size_t condition_count() const { return segments_.size() - 2; }
    const TokenSegment& condition(std::size_t k) const { return segments_[2 + k]; }

    std::size_t noisy_count() const { return segments_[0].count(); }
    std::size_t text_count() const { return segments_[1].count(); }
    std::size_t image_cond_count() const {
        std::size_t n = 0;
        for (std::size_t k = 0; k < condition_count(); ++k) n += condition(k).count();
        return n;
    }

    Matrix flat_tokens() const {
        Matrix out(total_, d_);
        std::size_t r = 0;
        for (const auto& s : segments_)
            for (std::size_t t = 0; t < s.count(); ++t, ++r)
                for (std::size_t c = 0; c < d_; ++c)
                    out.at(r, c) = s.tokens.at(t, c);
        return out;
    }

    std::vector<PositionIndex> flat_positions() const {
        std::vector<PositionIndex> out;
        out.reserve(total_);
        for (const auto& s : segments_)
            out.insert(out.end(), s.positions.begin(), s.positions.end());
        return out;
    }

    std::vector<std::uint8_t> flat_frozen() const {
        std::vector<std::uint8_t> out;
        out.reserve(total_);
        for (const auto& s : segments_)
            for (std::size_t t = 0; t < s.count(); ++t)
                out.push_back(s.is_frozen(t) ? 1 : 0);
        return out;
    }

private:
    std::vector<TokenSegment> segments_;  // [Noisy, Text, ImageCond...]
    std::vector<std::size_t> offsets_;
    std::size_t d_ = 0;
    std::size_t total_ = 0;
};

inline UnifiedSequence build_sequence(TokenSegment noisy, TokenSegment text,
                                      std::vector<TokenSegment> conds) {
    return UnifiedSequence(std::move(noisy), std::move(text), std::move(conds));
}

// Synthetic text segment: a seeded Gaussian embedding standing in for a text
// encoder. Constant across denoising steps, which is all its role requires.
inline TokenSegment synthetic_text(std::size_t count, std::size_t d,
                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    TokenSegment seg;
    seg.kind = SegmentKind::Text;
    seg.tokens = Matrix(count, d);
    for (auto& x : seg.tokens.data) x = dist(rng);
    seg.positions = text_positions(count);
    return seg;
}

}  // namespace ditcond
