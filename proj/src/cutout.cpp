#include "pmapcut/cutout.hpp"

#include <cmath>
#include <string>

#include "pmapcut/error.hpp"
#include "pmapcut/rng.hpp"

namespace pmapcut {

void CutoutParams::validate() const
{
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        fail("alpha must be > 0");
    if (!(b > 0.0) || !std::isfinite(b))
        fail("b must be > 0");
    if (max_iters < 1)
        fail("max_iters must be >= 1");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
        fail("gamma must be >= 0");
    if (K < 1)
        fail("K must be >= 1");
    if (!(eps_prob > 0.0 && eps_prob < 0.5))
        fail("eps_prob must lie in (0, 0.5)");
    if (!(converge_frac >= 0.0 && converge_frac <= 1.0))
        fail("converge_frac must lie in [0, 1]");
}

namespace {

void check_same_dims(const RgbImage& image, int width, int height, const char* what)
{
    if (image.width() != width || image.height() != height)
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " does not match the image");
}

void check_nondegenerate(const CutoutMask& mask)
{
    const auto fg = mask.fg_count();
    if (fg == 0)
        throw Error(ErrorCode::EmptyForeground, "mask has no foreground pixels");
    if (fg == mask.labels().size())
        throw Error(ErrorCode::EmptyBackground, "mask has no background pixels");
}

GridEnergy quantized(GridEnergy e)
{
    auto snap = [](Raster<double>& r) { r = (r / kEnergyQuantum).round() * kEnergyQuantum; };
    snap(e.unary_fg);
    snap(e.unary_bg);
    for (auto& edge : e.edges)
        snap(edge);
    return e;
}

long long count_changed(const CutoutMask& a, const CutoutMask& b) { return (a.labels() != b.labels()).count(); }

CutoutResult iterate(const RgbImage& image, CutoutMask mask, const PMapLikelihoods* likelihoods,
                     const Raster<bool>* clamp_bg, const CutoutParams& params)
{
    CutoutResult result{mask, CutoutTrace{mask, {}}};
    const double total = static_cast<double>(mask.labels().size());
    for (int k = 1; k <= params.max_iters; ++k) {
        const ColorModels models = fit_color_models(image, mask, params);
        const double w = likelihoods ? params.b / k : 0.0;
        UnaryPair unaries = blended_unaries(image, models, likelihoods, w);
        if (clamp_bg) {
            // Large enough that labeling a clamped pixel FG can never pay off.
            const double hard = unaries.fg.abs().maxCoeff() + unaries.bg.abs().maxCoeff() + 8.0 * params.gamma + 1.0;
            unaries.fg = clamp_bg->select(Raster<double>::Constant(image.height(), image.width(), hard), unaries.fg);
        }
        const IterationEnergy it = make_iteration_energy(image, unaries, params.gamma);
        CutResult cut = min_cut(it.energy);
        const long long changed = count_changed(cut.mask, mask);
        result.trace.iterations.push_back(TraceRecord{k, w, cut.energy + it.offset, changed, cut.mask});
        mask = std::move(cut.mask);
        if (static_cast<double>(changed) < params.converge_frac * total)
            break;
    }
    check_nondegenerate(mask);
    result.mask = std::move(mask);
    return result;
}

} // namespace

PMapLikelihoods pmap_likelihoods(const ProbMap& pmap, double alpha, double eps)
{
    const Raster<double> p = pmap.values().max(eps).min(1.0 - eps);
    return PMapLikelihoods{p.pow(alpha), (1.0 - p).pow(alpha)};
}

CutoutMask initial_mask(const RgbImage& image, const ProbMap& pmap, const CutoutParams& params)
{
    params.validate();
    check_same_dims(image, pmap.width(), pmap.height(), "P-map");
    const PMapLikelihoods lik = pmap_likelihoods(pmap, params.alpha, params.eps_prob);
    const GridEnergy energy = quantized(build_grid_energy(image, -lik.fg.log(), -lik.bg.log(), params.gamma));
    CutoutMask mask = min_cut(energy).mask;
    check_nondegenerate(mask);
    return mask;
}

CutoutResult pmap_grabcut(const RgbImage& image, const ProbMap& pmap, const CutoutParams& params)
{
    CutoutMask init = initial_mask(image, pmap, params);
    const PMapLikelihoods lik = pmap_likelihoods(pmap, params.alpha, params.eps_prob);
    return iterate(image, std::move(init), &lik, nullptr, params);
}

CutoutResult plain_grabcut(const RgbImage& image, const RectProposal& rect, const CutoutParams& params)
{
    params.validate();
    if (!rect.inside(image.width(), image.height()))
        throw Error(ErrorCode::OutOfBounds, "rectangle is not inside the image");
    if (rect.w == image.width() && rect.h == image.height())
        throw Error(ErrorCode::EmptyBackground, "rectangle covers the whole image; nothing to model as background");
    CutoutMask init(image.width(), image.height());
    init.labels().block(rect.y, rect.x, rect.h, rect.w).setConstant(true);
    const Raster<bool> outside = !init.labels();
    return iterate(image, std::move(init), nullptr, &outside, params);
}

ColorModels fit_color_models(const RgbImage& image, const CutoutMask& mask, const CutoutParams& params)
{
    check_same_dims(image, mask.width(), mask.height(), "mask");
    check_nondegenerate(mask);
    const ColorSamples fg = gather_colors(image, &mask.labels(), true);
    const ColorSamples bg = gather_colors(image, &mask.labels(), false);
    return ColorModels{fit_gmm(fg, params.K, Rng::mix(params.seed, 1)), fit_gmm(bg, params.K, Rng::mix(params.seed, 2))};
}

UnaryPair blended_unaries(const RgbImage& image, const ColorModels& models, const PMapLikelihoods* likelihoods, double w)
{
    const ColorSamples colors = gather_colors(image);
    UnaryPair u{Raster<double>(image.height(), image.width()), Raster<double>(image.height(), image.width())};
    Eigen::Map<Eigen::VectorXd>(u.fg.data(), u.fg.size()) = models.fg.neg_log_likelihood(colors);
    Eigen::Map<Eigen::VectorXd>(u.bg.data(), u.bg.size()) = models.bg.neg_log_likelihood(colors);
    if (likelihoods) {
        check_same_dims(image, static_cast<int>(likelihoods->fg.cols()), static_cast<int>(likelihoods->fg.rows()),
                        "P-map");
        u.fg += w * likelihoods->bg;
        u.bg += w * likelihoods->fg;
    }
    return u;
}

IterationEnergy make_iteration_energy(const RgbImage& image, const UnaryPair& unaries, double gamma)
{
    const Raster<double> shift = unaries.fg.min(unaries.bg);
    return IterationEnergy{quantized(build_grid_energy(image, unaries.fg - shift, unaries.bg - shift, gamma)),
                           shift.sum()};
}

} // namespace pmapcut
