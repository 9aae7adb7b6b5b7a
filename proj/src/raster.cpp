#include "pmapcut/raster.hpp"

#include <algorithm>
#include <string>

#include "pmapcut/error.hpp"

namespace pmapcut {

namespace {

void check_dims(int width, int height)
{
    if (width < 1 || height < 1)
        throw Error(ErrorCode::InvalidArgument,
                    "raster dimensions must be positive, got " + std::to_string(width) + "x" + std::to_string(height));
}

void check_rect(const RectProposal& rect, int width, int height)
{
    if (!rect.inside(width, height))
        throw Error(ErrorCode::OutOfBounds, "rect (" + std::to_string(rect.x) + "," + std::to_string(rect.y) + "," +
                                                std::to_string(rect.w) + "," + std::to_string(rect.h) +
                                                ") not inside " + std::to_string(width) + "x" +
                                                std::to_string(height));
}

} // namespace

RgbImage::RgbImage(int width, int height) : width_(width), height_(height)
{
    check_dims(width, height);
    pixels_ = Pixels::Zero(static_cast<Eigen::Index>(width) * height, 3);
}

RgbImage::RgbImage(int width, int height, Pixels pixels) : width_(width), height_(height), pixels_(std::move(pixels))
{
    check_dims(width, height);
    if (pixels_.rows() != static_cast<Eigen::Index>(width) * height)
        throw Error(ErrorCode::DimensionMismatch, "pixel count does not match width x height");
}

void RgbImage::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    auto row = pixels_.row(index(x, y));
    row(0) = r;
    row(1) = g;
    row(2) = b;
}

ProbMap::ProbMap(Raster<double> values, double tolerance) : values_(std::move(values))
{
    check_dims(static_cast<int>(values_.cols()), static_cast<int>(values_.rows()));
    if (!values_.allFinite())
        throw Error(ErrorCode::ValueOutOfRange, "probability map contains non-finite values");
    if (values_.minCoeff() < -tolerance || values_.maxCoeff() > 1.0 + tolerance)
        throw Error(ErrorCode::ValueOutOfRange, "probability outside [0,1]");
    values_ = values_.max(0.0).min(1.0);
}

ProbMap ProbMap::zeros(int width, int height)
{
    check_dims(width, height);
    return ProbMap(Raster<double>::Zero(height, width));
}

CutoutMask::CutoutMask(int width, int height)
{
    check_dims(width, height);
    labels_ = Raster<bool>::Constant(height, width, false);
}

CutoutMask::CutoutMask(Raster<bool> labels) : labels_(std::move(labels))
{
    check_dims(static_cast<int>(labels_.cols()), static_cast<int>(labels_.rows()));
}

RgbImage crop(const RgbImage& image, const RectProposal& rect)
{
    check_rect(rect, image.width(), image.height());
    RgbImage out(rect.w, rect.h);
    for (int y = 0; y < rect.h; ++y)
        out.pixels().middleRows(out.index(0, y), rect.w) =
            image.pixels().middleRows(image.index(rect.x, rect.y + y), rect.w);
    return out;
}

ProbMap crop(const ProbMap& pmap, const RectProposal& rect)
{
    check_rect(rect, pmap.width(), pmap.height());
    return ProbMap(pmap.values().block(rect.y, rect.x, rect.h, rect.w));
}

CutoutMask crop(const CutoutMask& mask, const RectProposal& rect)
{
    check_rect(rect, mask.width(), mask.height());
    return CutoutMask(mask.labels().block(rect.y, rect.x, rect.h, rect.w));
}

CutoutMask embed(const CutoutMask& mask, const RectProposal& rect, int width, int height)
{
    if (rect.w != mask.width() || rect.h != mask.height())
        throw Error(ErrorCode::DimensionMismatch, "mask does not match rect extent");
    check_rect(rect, width, height);
    CutoutMask out(width, height);
    out.labels().block(rect.y, rect.x, rect.h, rect.w) = mask.labels();
    return out;
}

std::optional<RectProposal> bounding_rect(const CutoutMask& mask)
{
    int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            if (mask(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0)
        return std::nullopt;
    return RectProposal{x0, y0, x1 - x0 + 1, y1 - y0 + 1, std::nullopt};
}

double rect_iou(const RectProposal& a, const RectProposal& b)
{
    const long long iw = std::max(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
    const long long ih = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
    const long long inter = iw * ih;
    const long long uni = a.area() + b.area() - inter;
    if (inter == 0 || uni <= 0)
        return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

RectProposal pad_rect(const RectProposal& rect, int margin, int width, int height)
{
    const int x0 = std::max(0, rect.x - margin);
    const int y0 = std::max(0, rect.y - margin);
    const int x1 = std::min(width, rect.right() + margin);
    const int y1 = std::min(height, rect.bottom() + margin);
    return RectProposal{x0, y0, x1 - x0, y1 - y0, rect.confidence};
}

} // namespace pmapcut
