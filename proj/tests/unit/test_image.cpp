#include <doctest.h>

#include "shipvl/image.hpp"
#include "shipvl/synthetic.hpp"
#include "support/fixtures.hpp"

using namespace shipvl;

TEST_SUITE("image") {

TEST_CASE("PGM encode and decode are inverse at 8 bits") {
    GrayImage img(5, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) img.at(x, y) = static_cast<float>(x * 3 + y) / 255.0f;
    const GrayImage back = decode_pnm(encode_pgm(img));
    CHECK(back.size() == img.size());
    CHECK(back.pixels() == img.pixels());
}

TEST_CASE("ASCII and colour netpbm variants decode") {
    const GrayImage p2 = decode_pnm("P2\n# comment\n2 1\n255\n0 255\n");
    CHECK(p2.at(1, 0) == 1.0f);
    const GrayImage p3 = decode_pnm("P3\n1 1\n255\n255 255 255\n");
    CHECK(p3.at(0, 0) == doctest::Approx(1.0f));
    CHECK_THROWS_AS(decode_pnm("P9\n1 1\n255\n"), Error);
    CHECK_THROWS_AS(decode_pnm("P5\n4 4\n255\nab"), Error);
}

TEST_CASE("image sizes are sniffed from headers") {
    fixture::TempDir dir;
    write_pgm(GrayImage(7, 9), dir / "a.pgm");
    CHECK(sniff_image_size(dir / "a.pgm") == ImageSize{7, 9});
    // Minimal PNG signature plus IHDR carrying 300 x 200.
    std::string png = "\x89PNG\r\n\x1a\n";
    png += std::string("\x00\x00\x00\x0dIHDR", 8);
    png += std::string("\x00\x00\x01\x2c\x00\x00\x00\xc8", 8);
    fixture::write_text(dir / "b.png", png);
    CHECK(sniff_image_size(dir / "b.png") == ImageSize{300, 200});
    CHECK_FALSE(sniff_image_size(dir / "missing.png").has_value());
    CHECK(find_image(dir.path(), "a").has_value());
    CHECK_FALSE(find_image(dir.path(), "c").has_value());
}

TEST_CASE("pooling and resampling preserve the mean") {
    GrayImage img(4, 4);
    for (int i = 0; i < 16; ++i) img.pixels()[static_cast<std::size_t>(i)] = static_cast<float>(i) / 15.0f;
    const GrayImage half = downsample2(img);
    CHECK(half.width() == 2);
    CHECK(half.at(0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 60.0f));
    const GrayImage same = resize_area(img, 4, 4);
    CHECK(same.pixels() == img.pixels());
}

TEST_CASE("synthetic scenes are deterministic with normalized boxes") {
    Rng a(3), b(3);
    const auto s1 = render_scene(a);
    const auto s2 = render_scene(b);
    CHECK(s1.image.pixels() == s2.image.pixels());
    REQUIRE(s1.boxes.size() == 1);
    CHECK(s1.boxes[0].x_max <= 1.0);
    CHECK(s1.pixel_boxes[0].width() >= 8);
    CHECK_FALSE(describe_scene(s1).empty());

    fixture::TempDir dir;
    SyntheticDatasetOptions o;
    o.count = 3;
    write_synthetic_dataset(dir.path(), o);
    CHECK(fixture::read_lines(dir / "hbb.jsonl").size() == 3);
    CHECK(fixture::read_lines(dir / "gt_obb.jsonl").size() == 3);
    CHECK(std::filesystem::exists(dir / "labels/synth_0002.txt"));
}

}  // TEST_SUITE
