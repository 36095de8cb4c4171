#pragma once

// Grayscale rasters and binary PGM (P5) I/O. Pixels are stored normalized to
// [0,1]; files are 8-bit with maxval 255. Masks are thresholded at 128.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ditcond {

struct Raster {
    int h = 0;
    int w = 0;
    std::vector<double> px;  // row-major, [0,1]

    Raster() = default;
    Raster(int h_, int w_, double fill = 0.0)
        : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_, fill) {}

    double& at(int i, int j) { return px[static_cast<std::size_t>(i) * w + j]; }
    double at(int i, int j) const {
        return px[static_cast<std::size_t>(i) * w + j];
    }
};

struct IntegrationMask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> m;  // 1 = to-be-generated, 0 = preserved context

    IntegrationMask() = default;
    IntegrationMask(int h_, int w_, std::uint8_t fill = 0)
        : h(h_), w(w_), m(static_cast<std::size_t>(h_) * w_, fill) {}

    std::uint8_t at(int i, int j) const {
        return m[static_cast<std::size_t>(i) * w + j];
    }
    std::uint8_t& at(int i, int j) {
        return m[static_cast<std::size_t>(i) * w + j];
    }
    std::size_t ones() const {
        std::size_t n = 0;
        for (auto v : m) n += v;
        return n;
    }
};

namespace detail {
// PGM header tokens may be separated by whitespace and '#' comments.
inline int next_pnm_int(std::istream& in, const std::string& path) {
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            in.unget();
            break;
        }
    }
    int value;
    if (!(in >> value)) {
        throw std::runtime_error("pgm: malformed header in " + path);
    }
    return value;
}
}  // namespace detail

inline Raster read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pgm: cannot open " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') {
        throw std::runtime_error("pgm: " + path + " is not binary PGM (P5)");
    }
    const int w = detail::next_pnm_int(in, path);
    const int h = detail::next_pnm_int(in, path);
    const int maxval = detail::next_pnm_int(in, path);
    if (w < 1 || h < 1) {
        throw std::runtime_error("pgm: bad dimensions in " + path);
    }
    if (maxval != 255) {
        throw std::runtime_error("pgm: " + path + " maxval " +
                                 std::to_string(maxval) + ", expected 255");
    }
    in.get();  // single whitespace after maxval
    std::vector<char> raw(static_cast<std::size_t>(w) * h);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw std::runtime_error("pgm: truncated pixel data in " + path);
    }
    Raster r(h, w);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        r.px[i] = static_cast<std::uint8_t>(raw[i]) / 255.0;
    }
    return r;
}

inline void write_pgm(const Raster& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pgm: cannot write " + path);
    out << "P5\n" << r.w << " " << r.h << "\n255\n";
    for (double v : r.px) {
        double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.put(static_cast<char>(static_cast<int>(clamped * 255.0 + 0.5)));
    }
}

inline IntegrationMask read_mask_pgm(const std::string& path) {
    const Raster r = read_pgm(path);
    IntegrationMask mask(r.h, r.w);
    for (std::size_t i = 0; i < r.px.size(); ++i) {
        mask.m[i] = r.px[i] * 255.0 >= 128.0 ? 1 : 0;
    }
    return mask;
}

}  // namespace ditcond
