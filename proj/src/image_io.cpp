#include "pmapcut/image_io.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <png.h>

#include "pmapcut/error.hpp"

namespace pmapcut {

namespace {

constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
constexpr std::array<char, 8> kRawFloatMagic{'P', 'M', 'A', 'P', 'F', '3', '2', '\0'};
constexpr std::size_t kRawFloatHeader = 16;

bool starts_with(ByteView bytes, std::span<const std::uint8_t> prefix)
{
    return bytes.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), bytes.begin());
}

bool is_raw_float(ByteView bytes)
{
    return bytes.size() >= kRawFloatMagic.size() &&
           std::memcmp(bytes.data(), kRawFloatMagic.data(), kRawFloatMagic.size()) == 0;
}

struct PnmHeader {
    char kind = 0; // '5' or '6'
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t offset = 0;
};

// Netpbm header: magic, then width, height, maxval as ASCII integers separated
// by whitespace and optional '#' comments, then exactly one whitespace byte.
PnmHeader parse_pnm_header(ByteView bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P')
        throw Error(ErrorCode::UnsupportedFormat, "not a netpbm file");
    PnmHeader h;
    h.kind = static_cast<char>(bytes[1]);
    std::size_t pos = 2;
    auto read_int = [&]() {
        for (;;) {
            if (pos >= bytes.size())
                throw Error(ErrorCode::CorruptData, "truncated netpbm header");
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        long long value = 0;
        std::size_t digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > (1LL << 30))
                throw Error(ErrorCode::CorruptData, "netpbm header value too large");
            ++pos;
            ++digits;
        }
        if (digits == 0)
            throw Error(ErrorCode::CorruptData, "malformed netpbm header");
        return static_cast<int>(value);
    };
    h.width = read_int();
    h.height = read_int();
    h.maxval = read_int();
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw Error(ErrorCode::CorruptData, "malformed netpbm header");
    h.offset = pos + 1;
    if (h.width < 1 || h.height < 1 || h.maxval < 1 || h.maxval > 65535)
        throw Error(ErrorCode::CorruptData, "invalid netpbm dimensions or maxval");
    return h;
}

std::size_t sample_bytes(int maxval) { return maxval > 255 ? 2 : 1; }

void check_payload(const PnmHeader& h, ByteView bytes, int channels)
{
    const std::size_t need =
        static_cast<std::size_t>(h.width) * h.height * channels * sample_bytes(h.maxval);
    if (bytes.size() - h.offset < need)
        throw Error(ErrorCode::CorruptData, "truncated netpbm payload");
}

unsigned read_sample(ByteView bytes, std::size_t at, int maxval)
{
    if (maxval > 255)
        return (static_cast<unsigned>(bytes[at * 2]) << 8) | bytes[at * 2 + 1];
    return bytes[at];
}

Bytes pgm_header(int width, int height, int maxval)
{
    const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" +
                               std::to_string(maxval) + "\n";
    return Bytes(header.begin(), header.end());
}

RgbImage decode_png(ByteView bytes)
{
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
        throw Error(ErrorCode::CorruptData, std::string("png: ") + png.message);
    if (png.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&png);
        throw Error(ErrorCode::UnsupportedFormat, "16-bit PNG images are not supported");
    }
    png.format = PNG_FORMAT_RGB;
    const int width = static_cast<int>(png.width);
    const int height = static_cast<int>(png.height);
    RgbImage::Pixels pixels(static_cast<Eigen::Index>(width) * height, 3);
    if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw Error(ErrorCode::CorruptData, std::string("png: ") + png.message);
    }
    return RgbImage(width, height, std::move(pixels));
}

RgbImage decode_ppm(ByteView bytes)
{
    const PnmHeader h = parse_pnm_header(bytes);
    if (h.kind != '6')
        throw Error(ErrorCode::UnsupportedFormat, std::string("netpbm P") + h.kind + " is not an RGB image");
    if (h.maxval > 255)
        throw Error(ErrorCode::UnsupportedFormat, "16-bit PPM images are not supported");
    check_payload(h, bytes, 3);
    const ByteView data = bytes.subspan(h.offset);
    RgbImage::Pixels pixels(static_cast<Eigen::Index>(h.width) * h.height, 3);
    for (Eigen::Index i = 0; i < pixels.rows(); ++i)
        for (int c = 0; c < 3; ++c) {
            const unsigned v = data[static_cast<std::size_t>(i) * 3 + c];
            pixels(i, c) = static_cast<std::uint8_t>(h.maxval == 255 ? v : std::lround(255.0 * v / h.maxval));
        }
    return RgbImage(h.width, h.height, std::move(pixels));
}

} // namespace

Bytes read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::NotFound, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, ByteView bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

RgbImage decode_image(ByteView bytes)
{
    if (bytes.empty())
        throw Error(ErrorCode::CorruptData, "empty image data");
    if (starts_with(bytes, kPngSignature))
        return decode_png(bytes);
    if (bytes[0] == 'P')
        return decode_ppm(bytes);
    throw Error(ErrorCode::UnsupportedFormat, "unrecognized image format");
}

RgbImage load_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

Bytes encode_png(const RgbImage& image)
{
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width());
    png.height = static_cast<png_uint_32>(image.height());
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels().data(), 0, nullptr))
        throw Error(ErrorCode::IoFailure, std::string("png: ") + png.message);
    Bytes out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels().data(), 0, nullptr))
        throw Error(ErrorCode::IoFailure, std::string("png: ") + png.message);
    out.resize(size);
    return out;
}

Bytes encode_ppm(const RgbImage& image)
{
    const std::string header =
        "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.insert(out.end(), image.pixels().data(), image.pixels().data() + image.pixels().size());
    return out;
}

void save_image(const RgbImage& image, const std::filesystem::path& path)
{
    const auto ext = path.extension().string();
    write_file(path, ext == ".ppm" ? encode_ppm(image) : encode_png(image));
}

ProbMap decode_pmap(ByteView bytes)
{
    if (bytes.empty())
        throw Error(ErrorCode::CorruptData, "empty P-map data");
    if (is_raw_float(bytes)) {
        if (bytes.size() < kRawFloatHeader)
            throw Error(ErrorCode::CorruptData, "truncated raw-float header");
        auto read_u32 = [&](std::size_t at) {
            return static_cast<std::uint32_t>(bytes[at]) | (static_cast<std::uint32_t>(bytes[at + 1]) << 8) |
                   (static_cast<std::uint32_t>(bytes[at + 2]) << 16) |
                   (static_cast<std::uint32_t>(bytes[at + 3]) << 24);
        };
        const std::uint32_t width = read_u32(8);
        const std::uint32_t height = read_u32(12);
        if (width < 1 || height < 1 || width > (1u << 20) || height > (1u << 20))
            throw Error(ErrorCode::CorruptData, "invalid raw-float dimensions");
        const std::size_t count = static_cast<std::size_t>(width) * height;
        if (bytes.size() - kRawFloatHeader < count * 4)
            throw Error(ErrorCode::CorruptData, "truncated raw-float payload");
        Raster<double> values(height, width);
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t bits = read_u32(kRawFloatHeader + 4 * i);
            float v;
            std::memcpy(&v, &bits, sizeof v);
            values.data()[i] = v;
        }
        return ProbMap(std::move(values));
    }
    const PnmHeader h = parse_pnm_header(bytes);
    if (h.kind != '5')
        throw Error(ErrorCode::UnsupportedFormat, std::string("netpbm P") + h.kind + " is not a P-map");
    check_payload(h, bytes, 1);
    const ByteView data = bytes.subspan(h.offset);
    Raster<double> values(h.height, h.width);
    for (Eigen::Index i = 0; i < values.size(); ++i)
        values.data()[i] = static_cast<double>(read_sample(data, static_cast<std::size_t>(i), h.maxval)) / h.maxval;
    return ProbMap(std::move(values));
}

ProbMap load_pmap(const std::filesystem::path& path) { return decode_pmap(read_file(path)); }

Bytes encode_pmap(const ProbMap& pmap, PMapFormat format)
{
    const auto& v = pmap.values();
    if (format == PMapFormat::RawFloat) {
        Bytes out(kRawFloatHeader + static_cast<std::size_t>(v.size()) * 4);
        std::memcpy(out.data(), kRawFloatMagic.data(), kRawFloatMagic.size());
        auto put_u32 = [&](std::size_t at, std::uint32_t x) {
            for (int b = 0; b < 4; ++b)
                out[at + b] = static_cast<std::uint8_t>(x >> (8 * b));
        };
        put_u32(8, static_cast<std::uint32_t>(pmap.width()));
        put_u32(12, static_cast<std::uint32_t>(pmap.height()));
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const float f = static_cast<float>(v.data()[i]);
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            put_u32(kRawFloatHeader + 4 * static_cast<std::size_t>(i), bits);
        }
        return out;
    }
    Bytes out = pgm_header(pmap.width(), pmap.height(), 65535);
    out.reserve(out.size() + static_cast<std::size_t>(v.size()) * 2);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const auto s = static_cast<std::uint16_t>(std::lround(v.data()[i] * 65535.0));
        out.push_back(static_cast<std::uint8_t>(s >> 8));
        out.push_back(static_cast<std::uint8_t>(s & 0xff));
    }
    return out;
}

void save_pmap(const ProbMap& pmap, const std::filesystem::path& path, PMapFormat format)
{
    write_file(path, encode_pmap(pmap, format));
}

CutoutMask decode_mask(ByteView bytes)
{
    if (bytes.empty())
        throw Error(ErrorCode::CorruptData, "empty mask data");
    const PnmHeader h = parse_pnm_header(bytes);
    if (h.kind != '5')
        throw Error(ErrorCode::UnsupportedFormat, std::string("netpbm P") + h.kind + " is not a mask");
    check_payload(h, bytes, 1);
    const ByteView data = bytes.subspan(h.offset);
    Raster<bool> labels(h.height, h.width);
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        labels.data()[i] = 2 * read_sample(data, static_cast<std::size_t>(i), h.maxval) > static_cast<unsigned>(h.maxval);
    return CutoutMask(std::move(labels));
}

CutoutMask load_mask(const std::filesystem::path& path) { return decode_mask(read_file(path)); }

Bytes encode_mask(const CutoutMask& mask)
{
    Bytes out = pgm_header(mask.width(), mask.height(), 255);
    const auto& l = mask.labels();
    for (Eigen::Index i = 0; i < l.size(); ++i)
        out.push_back(l.data()[i] ? 255 : 0);
    return out;
}

void save_mask(const CutoutMask& mask, const std::filesystem::path& path) { write_file(path, encode_mask(mask)); }

} // namespace pmapcut
