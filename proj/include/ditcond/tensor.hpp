#pragma once

// Dense double-precision kernels shared by the rest of the library.
// All reductions use a fixed left-to-right order so repeated runs are
// bit-identical.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ditcond {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row_ptr(std::size_t r) { return data.data() + r * cols; }
    const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }

    bool same_shape(const Matrix& o) const {
        return rows == o.rows && cols == o.cols;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                    shape_str(a) + " * " + shape_str(b));
    }
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += a.at(i, k) * b.at(k, j);
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

// Additive-bias softmax per row. Bias entries are either 0 or -inf; a -inf
// entry forces the output to exactly 0. A fully masked row is an error
// upstream, not a NaN downstream.
inline Matrix masked_softmax_rows(const Matrix& scores, const Matrix& bias) {
    if (!scores.same_shape(bias)) {
        throw std::invalid_argument("masked_softmax_rows: shape mismatch, " +
                                    shape_str(scores) + " vs " + shape_str(bias));
    }
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    Matrix out(scores.rows, scores.cols);
    for (std::size_t i = 0; i < scores.rows; ++i) {
        double mx = kNegInf;
        for (std::size_t j = 0; j < scores.cols; ++j) {
            if (bias.at(i, j) != kNegInf) {
                mx = std::max(mx, scores.at(i, j));
            }
        }
        if (mx == kNegInf) {
            throw std::invalid_argument(
                "masked_softmax_rows: row " + std::to_string(i) +
                " is fully masked");
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < scores.cols; ++j) {
            double e = (bias.at(i, j) == kNegInf)
                           ? 0.0
                           : std::exp(scores.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < scores.cols; ++j) {
            out.at(i, j) /= sum;
        }
    }
    return out;
}

inline std::vector<double> rms_norm(const std::vector<double>& v, double eps) {
    if (v.empty()) throw std::invalid_argument("rms_norm: empty vector");
    if (eps <= 0.0) throw std::invalid_argument("rms_norm: eps must be > 0");
    double ss = 0.0;
    for (double x : v) ss += x * x;
    const double scale = 1.0 / std::sqrt(ss / static_cast<double>(v.size()) + eps);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * scale;
    return out;
}

struct PositionIndex {
    int i = 0;
    int j = 0;
    bool operator==(const PositionIndex&) const = default;
};

// 2D rotary rotation: the first half of the head vector is rotated with the
// grid row index, the second half with the column index. Each half is a
// standard pairwise rotary scheme with geometric frequency base.
inline void rope2d_inplace(double* vec, std::size_t d_head, PositionIndex pos,
                           double base = 10000.0) {
    if (d_head % 4 != 0) {
        throw std::invalid_argument("rope2d: head dimension " +
                                    std::to_string(d_head) +
                                    " not divisible by 4");
    }
    const std::size_t half = d_head / 2;
    for (std::size_t h = 0; h < 2; ++h) {
        const double coord = (h == 0) ? static_cast<double>(pos.i)
                                      : static_cast<double>(pos.j);
        double* v = vec + h * half;
        for (std::size_t t = 0; t * 2 < half; ++t) {
            const double freq =
                std::pow(base, -2.0 * static_cast<double>(t) /
                                   static_cast<double>(half));
            const double angle = coord * freq;
            const double c = std::cos(angle), s = std::sin(angle);
            const double x = v[2 * t], y = v[2 * t + 1];
            v[2 * t] = x * c - y * s;
            v[2 * t + 1] = x * s + y * c;
        }
    }
}

inline std::vector<double> rope2d(std::vector<double> vec, PositionIndex pos,
                                  double base = 10000.0) {
    rope2d_inplace(vec.data(), vec.size(), pos, base);
    return vec;
}

inline double cosine_similarity(const std::vector<double>& u,
                                const std::vector<double>& v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("cosine_similarity: length mismatch");
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) {
        throw std::invalid_argument("cosine_similarity: zero vector");
    }
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

}  // namespace ditcond
