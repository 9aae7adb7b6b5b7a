#pragma once

#include <cstdint>
#include <vector>

#include "pmapcut/gmm.hpp"
#include "pmapcut/mincut.hpp"
#include "pmapcut/raster.hpp"

namespace pmapcut {

inline constexpr std::uint64_t kDefaultSeed = 0x5eed5eedULL;

struct CutoutParams {
    double alpha = 2.3;          ///< exponent on the P-map likelihoods
    double b = 25.0;             ///< P-map weight at iteration k is b / k
    int max_iters = 10;
    double gamma = 50.0;         ///< smoothness strength
    int K = kDefaultGmmComponents;
    double eps_prob = 1e-6;      ///< P-map values are clamped to [eps, 1 - eps]
    double converge_frac = 0.001;
    std::uint64_t seed = kDefaultSeed;

    /// Throws InvalidArgument when a field violates its range.
    void validate() const;
};

struct TraceRecord {
    int k = 0;
    double w = 0.0;
    double energy = 0.0;
    long long changed_pixels = 0;
    CutoutMask mask;
};

struct CutoutTrace {
    CutoutMask initial;
    std::vector<TraceRecord> iterations;
};

struct CutoutResult {
    CutoutMask mask;
    CutoutTrace trace;
};

/// P^F = p^alpha and P^B = (1 - p)^alpha, with p clamped to [eps, 1 - eps].
struct PMapLikelihoods {
    Raster<double> fg;
    Raster<double> bg;
};

PMapLikelihoods pmap_likelihoods(const ProbMap& pmap, double alpha, double eps);

/// Min-cut with unaries -ln P^F and -ln P^B and the contrast smoothness term.
/// Throws EmptyForeground / EmptyBackground on a degenerate result.
CutoutMask initial_mask(const RgbImage& image, const ProbMap& pmap, const CutoutParams& params);

/// P-map guided iterative GrabCut. Color models are initialized from the
/// initial mask; at iteration k the unaries are
///   U_fg = -ln GMM^F(z) + w P^B,  U_bg = -ln GMM^B(z) + w P^F,  w = b / k,
/// i.e. the negative logs of CP^F = GMM^F exp(-w P^B) and CP^B = GMM^B exp(-w P^F).
/// The whole crop takes part in both color models.
CutoutResult pmap_grabcut(const RgbImage& image, const ProbMap& pmap, const CutoutParams& params);

/// Classic rectangle-initialized GrabCut; pixels outside `rect` are fixed to
/// background. Trace records carry w = 0.
CutoutResult plain_grabcut(const RgbImage& image, const RectProposal& rect, const CutoutParams& params);

// Building blocks, exposed for inspection and testing.

struct ColorModels {
    ColorGmm fg;
    ColorGmm bg;
};

/// Fits GMM^F on the mask's foreground and GMM^B on its background.
ColorModels fit_color_models(const RgbImage& image, const CutoutMask& mask, const CutoutParams& params);

struct UnaryPair {
    Raster<double> fg;
    Raster<double> bg;
};

/// Raw -ln CP terms (may be negative where a color density exceeds 1).
/// `likelihoods` may be null, which gives the pure color-model unaries.
UnaryPair blended_unaries(const RgbImage& image, const ColorModels& models, const PMapLikelihoods* likelihoods,
                          double w);

/// Every graph-cut cost is rounded to a multiple of this quantum, so flows and
/// energies are sums of integers times 2^-20 and stay exact in double precision.
inline constexpr double kEnergyQuantum = 0x1.0p-20;

/// Graph-cut energy for one iteration. Each pixel's unaries are shifted by
/// min(U_fg, U_bg) so the costs are non-negative, then quantized. `offset` is
/// the total shift, so the unshifted energy of a labeling is
/// labeling_energy(energy) + offset up to the quantization.
struct IterationEnergy {
    GridEnergy energy;
    double offset = 0.0;
};

IterationEnergy make_iteration_energy(const RgbImage& image, const UnaryPair& unaries, double gamma);

} // namespace pmapcut
