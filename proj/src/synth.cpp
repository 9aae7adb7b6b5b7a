#include "pmapcut/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pmapcut/error.hpp"
#include "pmapcut/rng.hpp"

namespace pmapcut {

std::string_view to_string(BackgroundKind kind)
{
    switch (kind) {
    case BackgroundKind::Flat: return "flat";
    case BackgroundKind::Gradient: return "gradient";
    case BackgroundKind::Texture: return "texture";
    }
    return "flat";
}

BackgroundKind parse_background(std::string_view name)
{
    if (name == "flat")
        return BackgroundKind::Flat;
    if (name == "gradient")
        return BackgroundKind::Gradient;
    if (name == "texture")
        return BackgroundKind::Texture;
    throw Error(ErrorCode::InvalidArgument, "unknown background kind '" + std::string(name) + "'");
}

namespace {

constexpr int kGap = 2;
constexpr int kObjectNoise = 6;

struct Shape {
    Raster<bool> fg; // local silhouette, rows = height
    int width() const { return static_cast<int>(fg.cols()); }
    int height() const { return static_cast<int>(fg.rows()); }
};

void fill(Raster<bool>& r, int x, int y, int w, int h, bool value = true)
{
    for (int yy = std::max(0, y); yy < std::min<int>(static_cast<int>(r.rows()), y + h); ++yy)
        for (int xx = std::max(0, x); xx < std::min<int>(static_cast<int>(r.cols()), x + w); ++xx)
            r(yy, xx) = value;
}

Shape make_chair(Rng& rng)
{
    const int w = static_cast<int>(rng.uniform_int(36, 58));
    const int seat = static_cast<int>(rng.uniform_int(5, 9));
    const int leg_w = static_cast<int>(rng.uniform_int(3, 6));
    const int leg_h = static_cast<int>(rng.uniform_int(16, 28));
    const int back_h = static_cast<int>(rng.uniform_int(20, 36));
    const int back_w = static_cast<int>(rng.uniform_int(6, 11));
    const bool back_left = rng.uniform() < 0.5;
    const bool slot = rng.uniform() < 0.5;
    const bool crossbar = rng.uniform() < 0.5;

    Shape s;
    const int h = back_h + seat + leg_h;
    s.fg = Raster<bool>::Constant(h, w, false);
    const int back_x = back_left ? 0 : w - back_w;
    fill(s.fg, back_x, 0, back_w, back_h);
    if (slot && back_w >= 8 && back_h >= 24)
        fill(s.fg, back_x + 3, 5, back_w - 6, back_h - 10, false);
    fill(s.fg, 0, back_h, w, seat);
    fill(s.fg, 0, back_h + seat, leg_w, leg_h);
    fill(s.fg, w - leg_w, back_h + seat, leg_w, leg_h);
    if (crossbar)
        fill(s.fg, 0, back_h + seat + leg_h / 2, w, 3);
    return s;
}

Shape make_blob(Rng& rng, int lo, int hi)
{
    const int w = static_cast<int>(rng.uniform_int(lo, hi));
    const int h = static_cast<int>(rng.uniform_int(lo, hi));
    Shape s;
    s.fg = Raster<bool>::Constant(h, w, rng.uniform() < 0.5);
    if (!s.fg(0, 0)) {
        const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dx = (x - cx) / (w / 2.0), dy = (y - cy) / (h / 2.0);
                s.fg(y, x) = dx * dx + dy * dy <= 1.0;
            }
    }
    return s;
}

Color random_color(Rng& rng, double lo = 30, double hi = 225)
{
    return Color(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
}

// Rejection-samples a color whose largest channel difference from `away` is at least `min_diff`.
Color distinct_color(Rng& rng, const Color& away, double min_diff)
{
    for (;;) {
        Color c = random_color(rng, 10, 245);
        if ((c - away).cwiseAbs().maxCoeff() >= min_diff)
            return c;
    }
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

class Canvas {
public:
    Canvas(int width, int height) : width_(width), height_(height), blocked_(Raster<bool>::Constant(height, width, false))
    {
    }

    bool fits(const Shape& s, int ox, int oy) const
    {
        if (ox < 0 || oy < 0 || ox + s.width() > width_ || oy + s.height() > height_)
            return false;
        for (int y = 0; y < s.height(); ++y)
            for (int x = 0; x < s.width(); ++x)
                if (s.fg(y, x) && blocked_(oy + y, ox + x))
                    return false;
        return true;
    }

    CutoutMask place(const Shape& s, int ox, int oy)
    {
        CutoutMask mask(width_, height_);
        mask.labels().block(oy, ox, s.height(), s.width()) = s.fg;
        for (int y = 0; y < s.height(); ++y)
            for (int x = 0; x < s.width(); ++x)
                if (s.fg(y, x))
                    fill(blocked_, ox + x - kGap, oy + y - kGap, 2 * kGap + 1, 2 * kGap + 1);
        return mask;
    }

private:
    int width_;
    int height_;
    Raster<bool> blocked_;
};

} // namespace

SynthScene gen_scene(const SceneSpec& spec)
{
    if (spec.width < 1 || spec.height < 1)
        throw Error(ErrorCode::InvalidArgument, "scene dimensions must be positive");
    if (spec.n_targets < 1 || spec.n_distractors < 0)
        throw Error(ErrorCode::InvalidArgument, "scene needs n_targets >= 1 and n_distractors >= 0");
    if (!(spec.palette_overlap >= 0.0 && spec.palette_overlap <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "palette_overlap must lie in [0,1]");

    Rng rng(spec.seed);
    const Color target_color = random_color(rng);
    const Color bg_a = distinct_color(rng, target_color, 100);
    const Color bg_b = distinct_color(rng, target_color, 100);
    const double tex_fx = rng.uniform(0.05, 0.2), tex_fy = rng.uniform(0.05, 0.2);
    const double tex_px = rng.uniform(0, 6.28), tex_py = rng.uniform(0, 6.28);

    RgbImage image(spec.width, spec.height);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            Color c = bg_a;
            switch (spec.background) {
            case BackgroundKind::Flat:
                break;
            case BackgroundKind::Gradient: {
                const double t = spec.width > 1 ? static_cast<double>(x) / (spec.width - 1) : 0.0;
                c = (1.0 - t) * bg_a + t * bg_b;
                break;
            }
            case BackgroundKind::Texture: {
                const double s = std::sin(x * tex_fx + tex_px) * std::sin(y * tex_fy + tex_py);
                c = bg_a + Color::Constant(18.0 * s) +
                    Color(rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-8, 8));
                break;
            }
            }
            image.set(x, y, to_byte(c(0)), to_byte(c(1)), to_byte(c(2)));
        }

    auto paint = [&](const CutoutMask& mask, const Color& base) {
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                if (mask(x, y))
                    image.set(x, y, to_byte(base(0) + static_cast<double>(rng.uniform_int(-kObjectNoise, kObjectNoise))),
                              to_byte(base(1) + static_cast<double>(rng.uniform_int(-kObjectNoise, kObjectNoise))),
                              to_byte(base(2) + static_cast<double>(rng.uniform_int(-kObjectNoise, kObjectNoise))));
    };

    Canvas canvas(spec.width, spec.height);
    SynthScene scene{image, {}, {}, {}, {}, {}, target_color};

    for (int t = 0; t < spec.n_targets; ++t) {
        const Shape shape = make_chair(rng);
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            const int ox = static_cast<int>(rng.uniform_int(0, std::max(0, spec.width - shape.width())));
            const int oy = static_cast<int>(rng.uniform_int(0, std::max(0, spec.height - shape.height())));
            if (canvas.fits(shape, ox, oy)) {
                scene.gt_masks.push_back(canvas.place(shape, ox, oy));
                scene.gt_rects.push_back(RectProposal{ox, oy, shape.width(), shape.height(), std::nullopt});
                placed = true;
            }
        }
        if (!placed)
            throw Error(ErrorCode::PlacementFailed,
                        "could not place target " + std::to_string(t) + " after " +
                            std::to_string(kPlacementAttempts) + " attempts");
    }

    const int lookalikes = static_cast<int>(std::lround(spec.palette_overlap * spec.n_distractors));
    for (int d = 0; d < spec.n_distractors; ++d) {
        const bool lookalike = d < lookalikes;
        // Look-alikes alternate between full chairs and small chunks that fit inside a target's box.
        const Shape shape = !lookalike ? make_blob(rng, 14, 40) : d % 2 == 0 ? make_chair(rng) : make_blob(rng, 8, 18);
        const Color color = lookalike ? target_color : distinct_color(rng, target_color, 80);
        const RectProposal& anchor = scene.gt_rects[static_cast<std::size_t>(d % spec.n_targets)];
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            int ox, oy;
            // Early attempts push the distractor's center into the anchor target's box, then settle for contact.
            if (attempt < kPlacementAttempts / 3) {
                ox = static_cast<int>(rng.uniform_int(anchor.x, anchor.right() - 1)) - shape.width() / 2;
                oy = static_cast<int>(rng.uniform_int(anchor.y, anchor.bottom() - 1)) - shape.height() / 2;
            } else if (attempt < 2 * kPlacementAttempts / 3) {
                ox = static_cast<int>(rng.uniform_int(anchor.x - shape.width() + 4, anchor.right() - 4));
                oy = static_cast<int>(rng.uniform_int(anchor.y - shape.height() + 4, anchor.bottom() - 4));
            } else {
                ox = static_cast<int>(rng.uniform_int(0, std::max(0, spec.width - shape.width())));
                oy = static_cast<int>(rng.uniform_int(0, std::max(0, spec.height - shape.height())));
            }
            if (canvas.fits(shape, ox, oy)) {
                CutoutMask mask = canvas.place(shape, ox, oy);
                paint(mask, color);
                scene.distractor_masks.push_back(std::move(mask));
                scene.distractor_rects.push_back(RectProposal{ox, oy, shape.width(), shape.height(), std::nullopt});
                scene.distractor_lookalike.push_back(lookalike);
                placed = true;
            }
        }
        if (!placed)
            throw Error(ErrorCode::PlacementFailed,
                        "could not place distractor " + std::to_string(d) + " after " +
                            std::to_string(kPlacementAttempts) + " attempts");
    }

    for (const auto& mask : scene.gt_masks)
        paint(mask, target_color);
    scene.image = image;
    return scene;
}

CutoutMask mask_union(std::span<const CutoutMask> masks, int width, int height)
{
    CutoutMask out(width, height);
    for (const auto& m : masks) {
        if (m.width() != width || m.height() != height)
            throw Error(ErrorCode::DimensionMismatch, "masks must share dimensions");
        out.labels() = out.labels() || m.labels();
    }
    return out;
}

ProbMap oracle_pmap(const CutoutMask& gt, std::span<const CutoutMask> distractors, const OracleNoise& noise)
{
    if (noise.blur_radius < 0 || !(noise.flip_noise >= 0.0 && noise.flip_noise <= 1.0) ||
        !(noise.leak >= 0.0 && noise.leak <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "oracle noise parameters out of range");
    const int w = gt.width(), h = gt.height();
    Raster<double> v = gt.labels().cast<double>();
    for (const auto& d : distractors) {
        if (d.width() != w || d.height() != h)
            throw Error(ErrorCode::DimensionMismatch, "distractor mask does not match ground truth");
        v = d.labels().select(v.max(noise.leak), v);
    }

    if (noise.blur_radius > 0) {
        // Summed-area table with a zero border.
        Raster<double> sat = Raster<double>::Zero(h + 1, w + 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                sat(y + 1, x + 1) = v(y, x) + sat(y, x + 1) + sat(y + 1, x) - sat(y, x);
        const int r = noise.blur_radius;
        const double norm = 1.0 / static_cast<double>((2 * r + 1) * (2 * r + 1));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
                const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
                v(y, x) = (sat(y1, x1) - sat(y0, x1) - sat(y1, x0) + sat(y0, x0)) * norm;
            }
    }

    if (noise.flip_noise > 0.0) {
        Rng rng(noise.seed);
        for (Eigen::Index i = 0; i < v.size(); ++i)
            v.data()[i] += rng.uniform(-noise.flip_noise, noise.flip_noise);
    }
    return ProbMap(v.max(0.0).min(1.0));
}

} // namespace pmapcut
