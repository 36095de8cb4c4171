#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ditcond/raster.hpp"

using namespace ditcond;

namespace {
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() / "ditcond_raster_test";
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) { return (path / name).string(); }
};
}  // namespace

TEST_CASE("pgm round trip preserves 8-bit values") {
    TempDir tmp;
    Raster r(3, 5);
    for (std::size_t i = 0; i < r.px.size(); ++i) r.px[i] = (i * 17 % 256) / 255.0;
    write_pgm(r, tmp.file("a.pgm"));
    const Raster back = read_pgm(tmp.file("a.pgm"));
    CHECK(back.h == 3);
    CHECK(back.w == 5);
    for (std::size_t i = 0; i < r.px.size(); ++i) {
        CHECK(back.px[i] == doctest::Approx(r.px[i]).epsilon(1.0 / 255.0));
    }
}

TEST_CASE("pgm reader accepts comments in header") {
    TempDir tmp;
    std::ofstream out(tmp.file("c.pgm"), std::ios::binary);
    out << "P5\n# a comment\n2 1\n255\n";
    out.put(static_cast<char>(0));
    out.put(static_cast<char>(255));
    out.close();
    const Raster r = read_pgm(tmp.file("c.pgm"));
    CHECK(r.w == 2);
    CHECK(r.px[0] == 0.0);
    CHECK(r.px[1] == 1.0);
}

TEST_CASE("pgm reader rejects wrong magic, maxval and truncation") {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("p2.pgm"));
        out << "P2\n2 2\n255\n0 0 0 0\n";
    }
    CHECK_THROWS_AS(read_pgm(tmp.file("p2.pgm")), std::runtime_error);
    {
        std::ofstream out(tmp.file("m16.pgm"), std::ios::binary);
        out << "P5\n1 1\n65535\n";
        out.put(0);
        out.put(0);
    }
    CHECK_THROWS_AS(read_pgm(tmp.file("m16.pgm")), std::runtime_error);
    {
        std::ofstream out(tmp.file("short.pgm"), std::ios::binary);
        out << "P5\n4 4\n255\n";
        out.put(0);
    }
    CHECK_THROWS_AS(read_pgm(tmp.file("short.pgm")), std::runtime_error);
    CHECK_THROWS_AS(read_pgm(tmp.file("missing.pgm")), std::runtime_error);
}

TEST_CASE("mask threshold at 128") {
    TempDir tmp;
    Raster r(1, 3);
    r.px = {127.0 / 255.0, 128.0 / 255.0, 1.0};
    write_pgm(r, tmp.file("m.pgm"));
    const IntegrationMask m = read_mask_pgm(tmp.file("m.pgm"));
    CHECK(m.m[0] == 0);
    CHECK(m.m[1] == 1);
    CHECK(m.m[2] == 1);
    CHECK(m.ones() == 2);
}
