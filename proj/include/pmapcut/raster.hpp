#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>

namespace pmapcut {

/// Row-major dense raster; rows are image rows (y), columns are x.
template <typename Scalar>
using Raster = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Color = Eigen::Vector3d;

/// Axis-aligned rectangle in integer pixel units. Top-left origin; the right
/// and bottom edges (x + w, y + h) are exclusive.
struct RectProposal {
    int x = 0;
    int y = 0;
    int w = 1;
    int h = 1;
    std::optional<double> confidence;

    long long area() const { return static_cast<long long>(w) * h; }
    int right() const { return x + w; }
    int bottom() const { return y + h; }
    bool valid() const { return w >= 1 && h >= 1; }
    bool inside(int width, int height) const
    {
        return valid() && x >= 0 && y >= 0 && right() <= width && bottom() <= height;
    }

    friend bool operator==(const RectProposal& a, const RectProposal& b)
    {
        return a.x == b.x && a.y == b.y && a.w == b.w && a.h == b.h && a.confidence == b.confidence;
    }
};

/// 8-bit RGB raster. Pixels are stored one row per pixel (N x 3), row-major in
/// image order, so pixel (x, y) lives at row y * width + x.
class RgbImage {
public:
    using Pixels = Eigen::Array<std::uint8_t, Eigen::Dynamic, 3, Eigen::RowMajor>;

    RgbImage() = default; ///< empty 0 x 0 image
    RgbImage(int width, int height);
    RgbImage(int width, int height, Pixels pixels);

    int width() const { return width_; }
    int height() const { return height_; }
    Eigen::Index size() const { return pixels_.rows(); }
    Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width_ + x; }

    const Pixels& pixels() const { return pixels_; }
    Pixels& pixels() { return pixels_; }

    Color color(int x, int y) const { return pixels_.row(index(x, y)).cast<double>().transpose(); }
    Color color(Eigen::Index i) const { return pixels_.row(i).cast<double>().transpose(); }
    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    friend bool operator==(const RgbImage& a, const RgbImage& b)
    {
        return a.width_ == b.width_ && a.height_ == b.height_ && (a.pixels_ == b.pixels_).all();
    }

private:
    int width_ = 0;
    int height_ = 0;
    Pixels pixels_;
};

/// Per-pixel foreground probability in [0, 1].
class ProbMap {
public:
    /// Throws ValueOutOfRange when a value lies outside [0, 1] by more than
    /// `tolerance`; values inside the tolerance band are clamped.
    explicit ProbMap(Raster<double> values, double tolerance = 1e-9);

    static ProbMap zeros(int width, int height);

    int width() const { return static_cast<int>(values_.cols()); }
    int height() const { return static_cast<int>(values_.rows()); }
    double operator()(int x, int y) const { return values_(y, x); }
    const Raster<double>& values() const { return values_; }

private:
    Raster<double> values_;
};

/// Binary labeling; true is foreground.
class CutoutMask {
public:
    CutoutMask() = default; ///< empty 0 x 0 mask
    CutoutMask(int width, int height);
    explicit CutoutMask(Raster<bool> labels);

    int width() const { return static_cast<int>(labels_.cols()); }
    int height() const { return static_cast<int>(labels_.rows()); }
    bool operator()(int x, int y) const { return labels_(y, x); }
    bool& operator()(int x, int y) { return labels_(y, x); }
    const Raster<bool>& labels() const { return labels_; }
    Raster<bool>& labels() { return labels_; }
    Eigen::Index fg_count() const { return labels_.count(); }

    friend bool operator==(const CutoutMask& a, const CutoutMask& b)
    {
        return a.labels_.rows() == b.labels_.rows() && a.labels_.cols() == b.labels_.cols() &&
               (a.labels_ == b.labels_).all();
    }

private:
    Raster<bool> labels_;
};

RgbImage crop(const RgbImage& image, const RectProposal& rect);
ProbMap crop(const ProbMap& pmap, const RectProposal& rect);
CutoutMask crop(const CutoutMask& mask, const RectProposal& rect);

/// Places `mask` at `rect` inside an all-background canvas of the given size.
CutoutMask embed(const CutoutMask& mask, const RectProposal& rect, int width, int height);

/// Tight bounding box of the foreground pixels; nullopt for an empty mask.
std::optional<RectProposal> bounding_rect(const CutoutMask& mask);

/// Intersection over union of two rectangles, 0 when disjoint.
double rect_iou(const RectProposal& a, const RectProposal& b);

/// Grows `rect` by `margin` pixels on every side, clipped to the canvas.
RectProposal pad_rect(const RectProposal& rect, int margin, int width, int height);

} // namespace pmapcut
