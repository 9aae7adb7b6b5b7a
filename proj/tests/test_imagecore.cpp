#include "doctest.h"

#include <png.h>

#include "pmapcut/error.hpp"
#include "pmapcut/image_io.hpp"
#include "pmapcut/raster.hpp"
#include "pmapcut/rng.hpp"
#include "test_support.hpp"

using namespace pmapcut;
using pmapcut::testing::TempDir;

namespace {

Bytes bytes_of(const std::string& s) { return Bytes(s.begin(), s.end()); }

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

RgbImage random_image(Rng& rng, int w, int h)
{
    RgbImage img(w, h);
    for (Eigen::Index i = 0; i < img.pixels().size(); ++i)
        img.pixels().data()[i] = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return img;
}

} // namespace

TEST_SUITE("imagecore") {

TEST_CASE("load_image decodes a 2x2 red PPM")
{
    TempDir dir;
    std::string ppm = "P6\n2 2\n255\n";
    for (int i = 0; i < 4; ++i)
        ppm += std::string("\xff\x00\x00", 3);
    write_file(dir / "red.ppm", bytes_of(ppm));
    const RgbImage img = load_image(dir / "red.ppm");
    CHECK(img.width() == 2);
    CHECK(img.height() == 2);
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(img.pixels()(i, 0) == 255);
        CHECK(img.pixels()(i, 1) == 0);
        CHECK(img.pixels()(i, 2) == 0);
    }
}

TEST_CASE("load_image error paths")
{
    TempDir dir;
    write_file(dir / "empty.ppm", Bytes{});
    CHECK(code_of([&] { load_image(dir / "empty.ppm"); }) == ErrorCode::CorruptData);

    write_file(dir / "gray.pgm", bytes_of(std::string("P5\n1 1\n255\n\x7f", 12)));
    CHECK(code_of([&] { load_image(dir / "gray.pgm"); }) == ErrorCode::UnsupportedFormat);

    CHECK(code_of([&] { load_image(dir / "missing.png"); }) == ErrorCode::NotFound);

    write_file(dir / "short.ppm", bytes_of("P6\n4 4\n255\nabc"));
    CHECK(code_of([&] { load_image(dir / "short.ppm"); }) == ErrorCode::CorruptData);

    write_file(dir / "junk.bin", bytes_of("GIF89a"));
    CHECK(code_of([&] { load_image(dir / "junk.bin"); }) == ErrorCode::UnsupportedFormat);
}

TEST_CASE("16-bit PNG is rejected")
{
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = 2;
    png.height = 1;
    png.format = PNG_FORMAT_LINEAR_RGB;
    const std::uint16_t data[6] = {0, 1000, 65535, 5, 6, 7};
    png_alloc_size_t size = 0;
    REQUIRE(png_image_write_to_memory(&png, nullptr, &size, 0, data, 0, nullptr));
    Bytes out(size);
    REQUIRE(png_image_write_to_memory(&png, out.data(), &size, 0, data, 0, nullptr));
    out.resize(size);
    CHECK(code_of([&] { decode_image(out); }) == ErrorCode::UnsupportedFormat);
}

TEST_CASE("PNG and PPM encoders round-trip bit-exactly")
{
    Rng rng(7);
    const RgbImage img = random_image(rng, 13, 7);
    CHECK(decode_image(encode_png(img)) == img);
    CHECK(decode_image(encode_ppm(img)) == img);
}

TEST_CASE("load_pmap maps PGM samples onto [0,1]")
{
    const Bytes pgm = [] {
        Bytes b = bytes_of("P5\n3 1\n65535\n");
        for (unsigned s : {65535u, 0u, 32768u}) {
            b.push_back(static_cast<std::uint8_t>(s >> 8));
            b.push_back(static_cast<std::uint8_t>(s & 0xff));
        }
        return b;
    }();
    const ProbMap m = decode_pmap(pgm);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(1, 0) == 0.0);
    CHECK(m(2, 0) == 32768.0 / 65535.0);
    CHECK(m(2, 0) == doctest::Approx(0.500008).epsilon(1e-6));
}

TEST_CASE("save_pmap rounding and error paths")
{
    TempDir dir;
    Raster<double> half = Raster<double>::Constant(1, 1, 0.5);
    const Bytes enc = encode_pmap(ProbMap(half));
    REQUIRE(enc.size() >= 2);
    CHECK(((enc[enc.size() - 2] << 8) | enc.back()) == 32768);

    const ProbMap zeros = ProbMap::zeros(5, 4);
    save_pmap(zeros, dir / "z.pgm");
    CHECK(load_pmap(dir / "z.pgm").values().isApprox(zeros.values()));
    CHECK((load_pmap(dir / "z.pgm").values() == 0.0).all());

    CHECK(code_of([&] { save_pmap(zeros, dir / "no_such_dir" / "z.pgm"); }) == ErrorCode::IoFailure);
}

TEST_CASE("raw-float P-maps: layout, tolerance and range errors")
{
    Raster<double> v(1, 2);
    v << 0.25, 1.0;
    const Bytes enc = encode_pmap(ProbMap(v), PMapFormat::RawFloat);
    CHECK(enc.size() == 16 + 8);
    CHECK(std::string(enc.begin(), enc.begin() + 7) == "PMAPF32");
    CHECK(enc[7] == 0);
    CHECK(enc[8] == 2);
    CHECK(enc[12] == 1);

    auto raw_with = [](float value) {
        Bytes b = bytes_of(std::string("PMAPF32\0", 8));
        for (std::uint32_t d : {1u, 1u})
            for (int k = 0; k < 4; ++k)
                b.push_back(static_cast<std::uint8_t>(d >> (8 * k)));
        std::uint32_t bits;
        std::memcpy(&bits, &value, 4);
        for (int k = 0; k < 4; ++k)
            b.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
        return b;
    };
    CHECK(code_of([&] { decode_pmap(raw_with(1.5f)); }) == ErrorCode::ValueOutOfRange);
    CHECK(code_of([&] { decode_pmap(raw_with(-0.01f)); }) == ErrorCode::ValueOutOfRange);
    CHECK(decode_pmap(raw_with(1.0f))(0, 0) == 1.0);

    CHECK(ProbMap(Raster<double>::Constant(1, 1, 1.0 + 5e-10))(0, 0) == 1.0);
    CHECK(code_of([] { ProbMap(Raster<double>::Constant(1, 1, 1.0 + 1e-6)); }) == ErrorCode::ValueOutOfRange);

    CHECK(code_of([] { decode_pmap(bytes_of(std::string("P6\n1 1\n255\n\0\0\0", 14))); }) ==
          ErrorCode::UnsupportedFormat);
}

TEST_CASE("property: P-map round trips (exact raw-float, 1/65535 PGM)")
{
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const int w = static_cast<int>(rng.uniform_int(1, 17)), h = static_cast<int>(rng.uniform_int(1, 9));
        Raster<double> v(h, w);
        for (Eigen::Index i = 0; i < v.size(); ++i)
            v.data()[i] = static_cast<double>(static_cast<float>(rng.uniform())); // float-representable
        const ProbMap m(v);
        const ProbMap raw = decode_pmap(encode_pmap(m, PMapFormat::RawFloat));
        CHECK((raw.values() == m.values()).all());
        const ProbMap pgm = decode_pmap(encode_pmap(m, PMapFormat::Pgm16));
        CHECK((pgm.values() - m.values()).abs().maxCoeff() <= 1.0 / 65535.0);
    }
}

TEST_CASE("mask PGM round trip")
{
    CutoutMask m(4, 3);
    m(1, 1) = true;
    m(3, 2) = true;
    const Bytes enc = encode_mask(m);
    CHECK(std::string(enc.begin(), enc.begin() + 11) == "P5\n4 3\n255\n");
    CHECK(enc[11 + 5] == 255);
    CHECK(enc[11] == 0);
    CHECK(decode_mask(enc) == m);
}

TEST_CASE("crop")
{
    Rng rng(3);
    const RgbImage img = random_image(rng, 9, 6);
    CHECK(crop(img, RectProposal{0, 0, 9, 6, {}}) == img);

    const RgbImage px = crop(img, RectProposal{0, 0, 1, 1, {}});
    CHECK(px.width() == 1);
    CHECK((px.pixels().row(0) == img.pixels().row(0)).all());

    const RgbImage inner = crop(img, RectProposal{2, 3, 4, 2, {}});
    CHECK((inner.pixels().row(inner.index(1, 1)) == img.pixels().row(img.index(3, 4))).all());

    CHECK(code_of([&] { crop(img, RectProposal{6, 0, 4, 2, {}}); }) == ErrorCode::OutOfBounds);
    CHECK(code_of([&] { crop(img, RectProposal{-1, 0, 2, 2, {}}); }) == ErrorCode::OutOfBounds);
}

TEST_CASE("rect_iou examples")
{
    const RectProposal a{0, 0, 10, 10, {}};
    CHECK(rect_iou(a, a) == 1.0);
    CHECK(rect_iou(a, RectProposal{10, 0, 5, 5, {}}) == 0.0);
    CHECK(rect_iou(a, RectProposal{0, 0, 10, 5, {}}) == 0.5);
}

TEST_CASE("property: rect_iou is symmetric, bounded and matches cell counting")
{
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        auto r = [&] {
            return RectProposal{static_cast<int>(rng.uniform_int(0, 12)), static_cast<int>(rng.uniform_int(0, 12)),
                                static_cast<int>(rng.uniform_int(1, 10)), static_cast<int>(rng.uniform_int(1, 10)),
                                {}};
        };
        const RectProposal a = r(), b = r();
        const double iou = rect_iou(a, b);
        CHECK(iou == rect_iou(b, a));
        CHECK(rect_iou(a, a) == 1.0);
        CHECK(iou >= 0.0);
        CHECK(iou <= 1.0);
        int inter = 0, uni = 0;
        for (int y = 0; y < 25; ++y)
            for (int x = 0; x < 25; ++x) {
                const bool in_a = x >= a.x && x < a.right() && y >= a.y && y < a.bottom();
                const bool in_b = x >= b.x && x < b.right() && y >= b.y && y < b.bottom();
                inter += in_a && in_b;
                uni += in_a || in_b;
            }
        CHECK(iou == doctest::Approx(static_cast<double>(inter) / uni).epsilon(1e-12));
    }
}

TEST_CASE("bounding_rect and pad_rect")
{
    CutoutMask m(10, 8);
    CHECK_FALSE(bounding_rect(m).has_value());
    m(2, 3) = true;
    m(5, 6) = true;
    const auto r = bounding_rect(m);
    REQUIRE(r.has_value());
    CHECK(*r == RectProposal{2, 3, 4, 4, {}});
    CHECK(pad_rect(*r, 3, 10, 8) == RectProposal{0, 0, 9, 8, {}});
}

} // TEST_SUITE
