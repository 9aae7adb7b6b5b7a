#include "doctest.h"

#include <cmath>

#include "pmapcut/error.hpp"
#include "pmapcut/mincut.hpp"
#include "pmapcut/rng.hpp"
#include "test_support.hpp"

using namespace pmapcut;
namespace pt = pmapcut::testing;

TEST_SUITE("mincut") {

TEST_CASE("build_grid_energy: constant image gives gamma / dist")
{
    RgbImage img(4, 3);
    img.pixels().setConstant(77);
    const GridEnergy e = build_grid_energy(img, Raster<double>::Zero(3, 4), Raster<double>::Zero(3, 4), 50.0);
    CHECK(e.edges[0](0, 0) == 50.0);
    CHECK(e.edges[1](1, 2) == 50.0);
    CHECK(e.edges[2](0, 0) == doctest::Approx(50.0 / std::sqrt(2.0)));
    CHECK(e.edges[3](0, 1) == doctest::Approx(50.0 / std::sqrt(2.0)));
    // Missing neighbors stay at zero.
    CHECK(e.edges[0](0, 3) == 0.0);
    CHECK(e.edges[1](2, 0) == 0.0);
    CHECK(e.edges[3](0, 0) == 0.0);
}

TEST_CASE("build_grid_energy: gamma = 0 and the two-pixel closed form")
{
    Rng rng(2);
    RgbImage img(5, 5);
    for (Eigen::Index i = 0; i < img.pixels().size(); ++i)
        img.pixels().data()[i] = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    const GridEnergy zero = build_grid_energy(img, Raster<double>::Zero(5, 5), Raster<double>::Zero(5, 5), 0.0);
    for (const auto& edge : zero.edges)
        CHECK((edge == 0.0).all());

    // One axial edge with |dz|^2 = d^2, so beta = 1/(2 d^2) and w = gamma * exp(-1/2).
    RgbImage pair(2, 1);
    pair.set(0, 0, 10, 20, 30);
    pair.set(1, 0, 13, 24, 30);
    const GridEnergy e = build_grid_energy(pair, Raster<double>::Zero(1, 2), Raster<double>::Zero(1, 2), 50.0);
    CHECK(e.edges[0](0, 0) == doctest::Approx(50.0 * std::exp(-0.5)).epsilon(1e-14));
}

TEST_CASE("build_grid_energy error paths")
{
    RgbImage img(3, 3);
    CHECK_THROWS_AS(build_grid_energy(img, Raster<double>::Zero(2, 3), Raster<double>::Zero(3, 3), 1.0), Error);
    Raster<double> neg = Raster<double>::Zero(3, 3);
    neg(1, 1) = -1.0;
    try {
        build_grid_energy(img, neg, Raster<double>::Zero(3, 3), 1.0);
        FAIL("expected NegativeUnary");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NegativeUnary);
    }
}

TEST_CASE("min_cut: dominant unaries")
{
    GridEnergy e = GridEnergy::zeros(3, 2);
    e.unary_bg.setConstant(10.0);
    for (auto& edge : e.edges)
        edge.setZero();
    e.edges[0].leftCols(2).setConstant(7.0);
    const CutResult r = min_cut(e);
    CHECK(r.mask.fg_count() == 6);
    CHECK(r.energy == 0.0);
}

TEST_CASE("min_cut: 1x2 enumeration and the background tie-break")
{
    GridEnergy e = GridEnergy::zeros(2, 1);
    e.unary_fg << 0.0, 5.0;
    e.unary_bg << 5.0, 0.0;
    e.edges[0](0, 0) = 10.0;
    // FF = 5, BB = 5, FB = 10, BF = 20.
    const CutResult r = min_cut(e);
    CHECK(r.energy == 5.0);
    CHECK(r.mask.fg_count() == 0);
    CHECK(r.energy == doctest::Approx(r.flow + 0.0));
}

TEST_CASE("min_cut equals exhaustive minimum on random 3x3 energies")
{
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const GridEnergy e = pt::random_energy(rng, 3, 3, 20, true);
        const CutResult r = min_cut(e);
        CHECK(r.energy == pt::brute_force_min(e));
        CHECK(labeling_energy(e, r.mask) == r.energy);
    }
}

TEST_CASE("property: optimality and energy consistency on real-valued grids up to 16 pixels")
{
    Rng rng(99);
    for (int trial = 0; trial < 150; ++trial) {
        const int w = static_cast<int>(rng.uniform_int(1, 4)), h = static_cast<int>(rng.uniform_int(1, 4));
        const GridEnergy e = pt::random_energy(rng, w, h, rng.uniform(0.5, 30.0), false);
        const CutResult r = min_cut(e);
        const double best = pt::brute_force_min(e);
        CHECK(r.energy == doctest::Approx(best).epsilon(1e-9));
        CHECK(labeling_energy(e, r.mask) == doctest::Approx(r.energy).epsilon(1e-9));
        const double constant = e.unary_fg.min(e.unary_bg).sum();
        CHECK(r.energy == doctest::Approx(r.flow + constant).epsilon(1e-6));
    }
}

TEST_CASE("property: raising every foreground cost never grows the foreground")
{
    Rng rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        const int w = static_cast<int>(rng.uniform_int(2, 6)), h = static_cast<int>(rng.uniform_int(2, 6));
        GridEnergy e = pt::random_energy(rng, w, h, 12, true);
        const auto before = min_cut(e).mask.fg_count();
        e.unary_fg += static_cast<double>(rng.uniform_int(0, 6));
        CHECK(min_cut(e).mask.fg_count() <= before);
    }
}

TEST_CASE("min_cut agrees with the row-DP exact minimizer on 8x8 grids")
{
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const GridEnergy e = pt::random_energy(rng, 8, 8, 40, true);
        CHECK(min_cut(e).energy == pt::row_dp_min(e));
    }
}

TEST_CASE("MaxFlow matches Edmonds-Karp on random general graphs")
{
    Rng rng(4242);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(2, 12));
        std::vector<std::vector<double>> cap(static_cast<std::size_t>(n + 2), std::vector<double>(n + 2, 0.0));
        MaxFlow g(n);
        for (int i = 0; i < n; ++i) {
            const double s = static_cast<double>(rng.uniform_int(0, 9));
            const double t = static_cast<double>(rng.uniform_int(0, 9));
            g.add_terminal(i, s, t);
            cap[0][static_cast<std::size_t>(i + 1)] += s;
            cap[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(n + 1)] += t;
        }
        const int edges = static_cast<int>(rng.uniform_int(0, n * 3));
        for (int k = 0; k < edges; ++k) {
            const int i = static_cast<int>(rng.uniform_int(0, n - 1)), j = static_cast<int>(rng.uniform_int(0, n - 1));
            if (i == j)
                continue;
            const double c = static_cast<double>(rng.uniform_int(0, 9));
            const double rc = static_cast<double>(rng.uniform_int(0, 9));
            g.add_edge(i, j, c, rc);
            cap[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(j + 1)] += c;
            cap[static_cast<std::size_t>(j + 1)][static_cast<std::size_t>(i + 1)] += rc;
        }
        CHECK(g.solve() == pt::edmonds_karp(cap));
    }
}

} // TEST_SUITE
