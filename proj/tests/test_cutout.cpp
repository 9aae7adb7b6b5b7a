#include "doctest.h"

#include <cmath>

#include "pmapcut/cutout.hpp"
#include "pmapcut/error.hpp"
#include "pmapcut/eval.hpp"
#include "pmapcut/rng.hpp"
#include "pmapcut/synth.hpp"
#include "test_support.hpp"

using namespace pmapcut;
namespace pt = pmapcut::testing;

namespace {

ErrorCode code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

double iou(const CutoutMask& a, const CutoutMask& b)
{
    const double inter = static_cast<double>((a.labels() && b.labels()).count());
    const double uni = static_cast<double>((a.labels() || b.labels()).count());
    return uni == 0.0 ? 1.0 : inter / uni;
}

RgbImage flat_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    RgbImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.set(x, y, r, g, b);
    return img;
}

void paint(RgbImage& img, CutoutMask* mask, int x0, int y0, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) {
            img.set(x, y, r, g, b);
            if (mask)
                (*mask)(x, y) = true;
        }
}

// Small noisy two-tone image with a blob and a matching noisy P-map.
struct TinyCase {
    RgbImage image;
    ProbMap pmap;
};

TinyCase tiny_case(std::uint64_t seed, int size)
{
    Rng rng(seed);
    RgbImage img(size, size);
    Raster<double> p(size, size);
    const int cx = static_cast<int>(rng.uniform_int(2, size - 3)), cy = static_cast<int>(rng.uniform_int(2, size - 3));
    const int r = static_cast<int>(rng.uniform_int(1, 3));
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const bool in = std::abs(x - cx) <= r && std::abs(y - cy) <= r;
            const double base = in ? 180.0 : 70.0;
            auto ch = [&] { return static_cast<std::uint8_t>(base + rng.uniform(-40.0, 40.0)); };
            img.set(x, y, ch(), ch(), ch());
            p(y, x) = std::clamp((in ? 0.8 : 0.2) + rng.uniform(-0.3, 0.3), 0.0, 1.0);
        }
    return TinyCase{img, ProbMap(p)};
}

} // namespace

TEST_SUITE("cutout") {

TEST_CASE("pmap_likelihoods: p = 0.5 under the default exponent")
{
    const ProbMap half(Raster<double>::Constant(2, 3, 0.5));
    const PMapLikelihoods l = pmap_likelihoods(half, 2.3, 1e-6);
    const double expected = std::exp(2.3 * std::log(0.5)); // 0.20306...
    CHECK(std::abs(l.fg(0, 0) - expected) <= 1e-12);
    CHECK(std::abs(l.bg(1, 2) - expected) <= 1e-12);
    CHECK(expected == doctest::Approx(0.20306).epsilon(1e-4));
}

TEST_CASE("pmap_likelihoods: clamping and the alpha = 1 identity")
{
    Raster<double> v(1, 3);
    v << 0.0, 1.0, 0.3;
    const ProbMap m(v);
    const double eps = 1e-6;
    const PMapLikelihoods l = pmap_likelihoods(m, 2.3, eps);
    CHECK(l.fg(0, 0) == std::pow(eps, 2.3));
    CHECK(l.bg(0, 0) == std::pow(1.0 - eps, 2.3));
    CHECK(l.fg(0, 1) == std::pow(1.0 - eps, 2.3));
    CHECK(std::isfinite(-std::log(l.fg(0, 0))));

    const PMapLikelihoods one = pmap_likelihoods(m, 1.0, eps);
    CHECK(one.fg(0, 2) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(one.bg(0, 2) == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("initial_mask reproduces the ground truth from a clean P-map")
{
    SceneSpec spec;
    spec.seed = 21;
    const SynthScene s = gen_scene(spec);
    const ProbMap clean = oracle_pmap(s.gt_masks[0], {}, OracleNoise{});
    CHECK(initial_mask(s.image, clean, CutoutParams{}) == s.gt_masks[0]);
}

TEST_CASE("degenerate P-maps give EmptyForeground")
{
    const RgbImage img = flat_image(12, 10, 40, 90, 40);
    CHECK(code_of([&] { initial_mask(img, ProbMap::zeros(12, 10), CutoutParams{}); }) == ErrorCode::EmptyForeground);
    CHECK(code_of([&] { pmap_grabcut(img, ProbMap::zeros(12, 10), CutoutParams{}); }) == ErrorCode::EmptyForeground);

    CutoutParams no_smooth;
    no_smooth.gamma = 0.0;
    const ProbMap half(Raster<double>::Constant(10, 12, 0.5));
    CHECK(code_of([&] { pmap_grabcut(img, half, no_smooth); }) == ErrorCode::EmptyForeground);

    CHECK(code_of([&] { initial_mask(img, ProbMap::zeros(5, 5), CutoutParams{}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("parameter validation")
{
    const RgbImage img = flat_image(4, 4, 1, 2, 3);
    CutoutParams p;
    p.alpha = 0.0;
    CHECK(code_of([&] { pmap_grabcut(img, ProbMap::zeros(4, 4), p); }) == ErrorCode::InvalidArgument);
    p = CutoutParams{};
    p.max_iters = 0;
    CHECK(code_of([&] { plain_grabcut(img, RectProposal{1, 1, 2, 2, {}}, p); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("trace weights follow b / k exactly")
{
    SceneSpec spec;
    spec.seed = 4;
    spec.n_distractors = 3;
    spec.palette_overlap = 1.0;
    const SynthScene s = gen_scene(spec);
    const ProbMap pm = oracle_pmap(s.gt_masks[0], s.distractor_masks, OracleNoise{2, 0.05, 0.15, 3});
    CutoutParams params;
    params.max_iters = 6;
    params.converge_frac = 0.0; // never stop early
    const CutoutResult r = pmap_grabcut(s.image, pm, params);
    REQUIRE(r.trace.iterations.size() == 6);
    CHECK(r.trace.iterations[0].w == 25.0);
    CHECK(r.trace.iterations[1].w == 12.5);
    CHECK(r.trace.iterations[2].w == 25.0 / 3.0);
    for (std::size_t i = 0; i < r.trace.iterations.size(); ++i) {
        CHECK(r.trace.iterations[i].k == static_cast<int>(i + 1));
        CHECK(r.trace.iterations[i].w == 25.0 / static_cast<double>(i + 1));
    }
    CHECK(r.mask == r.trace.iterations.back().mask);
}

TEST_CASE("property: the P-map shifts each unary by at most w")
{
    SceneSpec spec;
    spec.seed = 8;
    spec.n_distractors = 2;
    spec.background = BackgroundKind::Texture;
    const SynthScene s = gen_scene(spec);
    const ProbMap pm = oracle_pmap(s.gt_masks[0], s.distractor_masks, OracleNoise{1, 0.1, 0.2, 8});
    const CutoutParams params;
    const ColorModels models = fit_color_models(s.image, initial_mask(s.image, pm, params), params);
    const PMapLikelihoods lik = pmap_likelihoods(pm, params.alpha, params.eps_prob);
    const UnaryPair bare = blended_unaries(s.image, models, nullptr, 0.0);
    for (int k = 1; k <= 10; ++k) {
        const double w = params.b / k;
        const UnaryPair u = blended_unaries(s.image, models, &lik, w);
        CHECK(((u.fg - bare.fg) >= 0.0).all());
        CHECK(((u.fg - bare.fg) <= w).all());
        CHECK(((u.bg - bare.bg) >= 0.0).all());
        CHECK(((u.bg - bare.bg) <= w).all());
    }
}

TEST_CASE("results are deterministic")
{
    SceneSpec spec;
    spec.seed = 13;
    spec.n_distractors = 4;
    spec.palette_overlap = 0.5;
    spec.background = BackgroundKind::Gradient;
    const SynthScene s = gen_scene(spec);
    const ProbMap pm = oracle_pmap(s.gt_masks[0], s.distractor_masks, OracleNoise{2, 0.05, 0.15, 1});
    const CutoutResult a = pmap_grabcut(s.image, pm, CutoutParams{});
    const CutoutResult b = pmap_grabcut(s.image, pm, CutoutParams{});
    CHECK(a.mask == b.mask);
    REQUIRE(a.trace.iterations.size() == b.trace.iterations.size());
    for (std::size_t i = 0; i < a.trace.iterations.size(); ++i)
        CHECK(a.trace.iterations[i].energy == b.trace.iterations[i].energy);
}

TEST_CASE("clean high-contrast scene is cut almost perfectly")
{
    SceneSpec spec;
    spec.seed = 3;
    const SynthScene s = gen_scene(spec);
    const ProbMap pm = oracle_pmap(s.gt_masks[0], {}, OracleNoise{1, 0.02, 0.0, 5});
    CHECK(iou(pmap_grabcut(s.image, pm, CutoutParams{}).mask, s.gt_masks[0]) >= 0.99);
}

TEST_CASE("plain_grabcut on a flat scene and its error paths")
{
    SceneSpec spec;
    spec.seed = 17;
    const SynthScene s = gen_scene(spec);
    const RectProposal& box = s.gt_rects[0];
    const RectProposal region = pad_rect(box, 12, s.image.width(), s.image.height());
    const RgbImage img = crop(s.image, region);
    const RectProposal rect{box.x - region.x, box.y - region.y, box.w, box.h, {}};
    const CutoutResult r = plain_grabcut(img, rect, CutoutParams{});
    CHECK(iou(r.mask, crop(s.gt_masks[0], region)) >= 0.95);
    for (const auto& it : r.trace.iterations)
        CHECK(it.w == 0.0);

    CHECK(code_of([&] { plain_grabcut(img, RectProposal{0, 0, img.width(), img.height(), {}}, CutoutParams{}); }) ==
          ErrorCode::EmptyBackground);
    CHECK(code_of([&] { plain_grabcut(img, RectProposal{5, 5, img.width(), 4, {}}, CutoutParams{}); }) ==
          ErrorCode::OutOfBounds);
}

TEST_CASE("a look-alike inside the rectangle pulls plain_grabcut off the target; the P-map does not")
{
    // L-shaped target whose box has an empty corner; a same-colored block sits there.
    auto build = [](bool with_distractor, CutoutMask& gt) {
        RgbImage img = flat_image(60, 60, 40, 150, 60);
        gt = CutoutMask(60, 60);
        paint(img, &gt, 10, 10, 8, 40, 150, 40, 160);
        paint(img, &gt, 10, 42, 40, 8, 150, 40, 160);
        if (with_distractor)
            paint(img, nullptr, 28, 14, 16, 16, 150, 40, 160);
        return img;
    };
    CutoutMask gt;
    const RectProposal rect{10, 10, 40, 40, {}};
    const RgbImage clean = build(false, gt);
    const double alone = iou(plain_grabcut(clean, rect, CutoutParams{}).mask, gt);
    const RgbImage cluttered = build(true, gt);
    const double with = iou(plain_grabcut(cluttered, rect, CutoutParams{}).mask, gt);
    CHECK(alone >= 0.95);
    CHECK(with < alone - 0.2);

    CutoutMask distractor(60, 60);
    distractor.labels().block(14, 28, 16, 16).setConstant(true);
    const std::vector<CutoutMask> others{distractor};
    const ProbMap pm = oracle_pmap(gt, others, OracleNoise{2, 0.05, 0.15, 9});
    CHECK(iou(pmap_grabcut(cluttered, pm, CutoutParams{}).mask, gt) > with);
}

TEST_CASE("pmap_grabcut beats plain_grabcut on a cluttered grid")
{
    const std::vector<SceneSpec> grid = clutter_grid(6, 500);
    const std::vector<Method> methods{Method::PmapGrabcut, Method::PlainGrabcut};
    const BenchReport rep = run_benchmark(grid, OracleNoise{2, 0.05, 0.15, 77}, CutoutParams{}, methods);
    CHECK(rep.summary.at(Method::PmapGrabcut).mean_iou > rep.summary.at(Method::PlainGrabcut).mean_iou);
}

TEST_CASE("property: every trace iteration attains the exact minimum of its energy")
{
    int cases = 0;
    for (std::uint64_t seed = 0; cases < 8 && seed < 100; ++seed) {
        const TinyCase c = tiny_case(seed, 8);
        CutoutParams params;
        params.K = 2;
        params.max_iters = 4;
        params.converge_frac = 0.0;
        CutoutResult r;
        try {
            r = pmap_grabcut(c.image, c.pmap, params);
        } catch (const Error&) {
            continue; // degenerate instance
        }
        ++cases;
        const PMapLikelihoods lik = pmap_likelihoods(c.pmap, params.alpha, params.eps_prob);
        CutoutMask prev = r.trace.initial;
        for (const auto& it : r.trace.iterations) {
            const ColorModels models = fit_color_models(c.image, prev, params);
            const IterationEnergy e =
                make_iteration_energy(c.image, blended_unaries(c.image, models, &lik, it.w), params.gamma);
            const double best = pt::row_dp_min(e.energy);
            CHECK(labeling_energy(e.energy, it.mask) == best);
            CHECK(it.energy == labeling_energy(e.energy, it.mask) + e.offset);
            prev = it.mask;
        }
    }
    CHECK(cases == 8);
}

} // TEST_SUITE
