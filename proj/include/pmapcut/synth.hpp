#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pmapcut/raster.hpp"

namespace pmapcut {

enum class BackgroundKind { Flat, Gradient, Texture };

std::string_view to_string(BackgroundKind kind);
BackgroundKind parse_background(std::string_view name);

struct SceneSpec {
    int width = 320;
    int height = 240;
    int n_targets = 1;
    int n_distractors = 0;
    /// Fraction of distractors drawn as look-alikes with the targets' color
    /// distribution. Look-alikes alternate between chairs and small chunks, and
    /// prefer spots inside or touching a target's box.
    double palette_overlap = 0.0;
    BackgroundKind background = BackgroundKind::Flat;
    std::uint64_t seed = 1;
};

struct SynthScene {
    RgbImage image;
    std::vector<CutoutMask> gt_masks;
    std::vector<RectProposal> gt_rects;
    std::vector<CutoutMask> distractor_masks;
    std::vector<RectProposal> distractor_rects;
    std::vector<bool> distractor_lookalike;
    Color target_color;
};

struct OracleNoise {
    int blur_radius = 0;
    double flip_noise = 0.0;
    double leak = 0.0;
    std::uint64_t seed = 0;
};

inline constexpr int kPlacementAttempts = 1000;

/// Procedural cluttered scene. Targets are chair-like silhouettes (back, seat,
/// legs, optional slot and crossbar) sharing one palette; objects never overlap
/// and keep a 2-pixel gap. Same spec, same bytes.
SynthScene gen_scene(const SceneSpec& spec);

/// Degrades a ground-truth mask into a P-map: gt as {0,1}, leak floor painted
/// over distractor pixels, box blur of radius r (zero padding, fixed (2r+1)^2
/// divisor), uniform noise in [-flip_noise, flip_noise], clamp to [0, 1].
ProbMap oracle_pmap(const CutoutMask& gt, std::span<const CutoutMask> distractors, const OracleNoise& noise);

/// Union of masks; all inputs must share dimensions.
CutoutMask mask_union(std::span<const CutoutMask> masks, int width, int height);

} // namespace pmapcut
