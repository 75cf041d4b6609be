#include <doctest.h>

#include <cmath>

#include "shipvl/image.hpp"
#include "shipvl/labeling.hpp"
#include "support/fixtures.hpp"

using namespace shipvl;

namespace {

SourceAnnotation one_object(Quad q, ImageSize size) {
    SourceAnnotation a;
    a.image_id = "img";
    a.image_size = size;
    a.source_dataset = "DOTA";
    a.objects.push_back({q, "ship", 0});
    return a;
}

void write_blank(const std::filesystem::path& path, int w, int h) { write_pgm(GrayImage(w, h, 0.2f), path); }

}  // namespace

TEST_SUITE("labeling") {

TEST_CASE("DOTA lines map directly to objects") {
    const auto p = parse_dota_annotation("imagesource:GoogleEarth\ngsd:0.5\n10 10 50 10 50 30 10 30 ship 0\n", {100, 60});
    REQUIRE(p.annotation.objects.size() == 1);
    CHECK(p.annotation.objects[0].quad[2] == Point{50, 30});
    CHECK(p.malformed.empty());
}

TEST_CASE("DOTA arity errors are collected, not fatal") {
    const auto p = parse_dota_annotation("10 10 50 10 50 30 10 ship 0\n10 10 50 10 50 30 10 30 ship 0\n", {100, 60});
    CHECK(p.annotation.objects.size() == 1);
    REQUIRE(p.malformed.size() == 1);
    CHECK(p.malformed[0].line_no == 1);
}

TEST_CASE("non-ship classes are filtered") {
    const auto p = parse_dota_annotation("10 10 50 10 50 30 10 30 plane 0\n", {100, 60});
    CHECK(p.annotation.objects.empty());
    CHECK(p.filtered == 1);
}

TEST_CASE("strict mode is fatal only when nothing valid remains") {
    DotaOptions strict{true, {"ship"}};
    CHECK_THROWS_AS(parse_dota_annotation("1 2 3\n", {10, 10}, strict), Error);
    CHECK_NOTHROW(parse_dota_annotation("1 2 3\n1 1 5 1 5 5 1 5 ship 0\n", {10, 10}, strict));
}

TEST_CASE("hbb-json entries become axis-aligned quads") {
    const auto p = parse_hbb_json_annotation(R"([{"bbox": [10, 20, 40, 40]}, {"bbox": [1, 2]}])", {100, 100});
    REQUIRE(p.annotation.objects.size() == 1);
    CHECK(p.annotation.objects[0].quad[2] == Point{50, 60});
    CHECK(p.malformed.size() == 1);
}

TEST_CASE("instructions are the fixed sentences unless augmented") {
    CHECK(build_instruction(Task::hbb) == "Please detect all ships using the horizontal bounding box.");
    CHECK(build_instruction(Task::obb) == "Please detect all ships using the oriented bounding box.");
    CHECK(build_instruction(Task::hbb) == build_instruction(Task::hbb));
    InstructionOptions aug{true, 9};
    CHECK(build_instruction(Task::hbb, aug) == build_instruction(Task::hbb, aug));
}

TEST_CASE("convert_record normalizes and serializes") {
    const Quad q{{{10, 20}, {50, 20}, {50, 60}, {10, 60}}};
    const auto hbb = convert_record(one_object(q, {100, 100}), Task::hbb);
    CHECK(hbb.record.answer == "[0.100, 0.200, 0.500, 0.600]");
    CHECK(hbb.record.id == "dota_img_hbb");
    const auto obb = convert_record(one_object(q, {100, 100}), Task::obb);
    CHECK(obb.record.answer == "[0.100, 0.200, 0.500, 0.200, 0.500, 0.600, 0.100, 0.600]");
    SourceAnnotation empty = one_object(q, {100, 100});
    empty.objects.clear();
    CHECK(convert_record(empty, Task::hbb).record.answer == "No ship is detected.");
}

TEST_CASE("degenerate objects are dropped with a reason") {
    SourceAnnotation a = one_object({{{10, 20}, {50, 20}, {50, 60}, {10, 60}}}, {100, 100});
    a.objects.push_back({{{{5, 5}, {6, 6}, {7, 7}, {8, 8}}}, "ship", 0});
    const auto c = convert_record(a, Task::hbb);
    CHECK(c.boxes.size() == 1);
    REQUIRE(c.dropped.size() == 1);
    CHECK(c.dropped[0].reason == "degenerate");
}

TEST_CASE("records round-trip through the answer grammar within a pixel") {
    const Quad q{{{13.2, 27.9}, {61.4, 22.5}, {66.0, 63.1}, {17.8, 68.4}}};
    const ImageSize size{137, 91};
    const auto c = convert_record(one_object(q, size), Task::obb);
    const auto parsed = parse_answer(c.record.answer, Task::obb);
    REQUIRE(parsed.boxes.size() == 1);
    const OBox px = rescale(std::get<OBox>(parsed.boxes[0]), CoordSpace::pixel(size.width, size.height));
    const OBox src = canonicalize_quad(q, CoordSpace::pixel(size.width, size.height));
    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(px[i].x - src[i].x) <= 1.0);
        CHECK(std::abs(px[i].y - src[i].y) <= 1.0);
    }
}

TEST_CASE("record JSON keeps the documented key order") {
    InstructionRecord r{"a_b_hbb", "b.pgm", "Please.", "[0.100, 0.200, 0.500, 0.600]", Task::hbb, "DOTA", Modality::optical};
    const std::string text = to_json(r).dump();
    CHECK(text ==
          R"({"id":"a_b_hbb","image":"b.pgm","instruction":"Please.","answer":"[0.100, 0.200, 0.500, 0.600]","task":"hbb","source_dataset":"DOTA","modality":"optical"})");
    CHECK(record_from_json(nlohmann::json::parse(text)) == r);
}

TEST_CASE("convert_dataset streams sorted records and counts drops") {
    fixture::TempDir dir;
    for (const char* id : {"c", "a", "b"}) {
        write_blank(dir / (std::string("images/") + id + ".pgm"), 100, 100);
        fixture::write_text(dir / (std::string("labels/") + id + ".txt"), "10 10 50 10 50 30 10 30 ship 0\n");
    }
    fixture::write_text(dir / "labels/b.txt", "10 10 50 10 50 30 10 30 ship 0\n5 5 6 6 7 7 8 8 ship 0\n");
    ConvertOptions o;
    o.images_dir = dir / "images";
    o.annotations_dir = dir / "labels";
    o.output = dir / "out.jsonl";
    const auto stats = convert_dataset(o);
    CHECK(stats.records_emitted == 3);
    CHECK(stats.objects_dropped == 1);
    CHECK(stats.records_emitted == stats.inputs - stats.images_skipped);
    const auto records = read_records(o.output);
    REQUIRE(records.size() == 3);
    CHECK(records[0].id == "dota_a_hbb");
    CHECK(records[2].id == "dota_c_hbb");

    const auto first = fixture::file_hash(o.output);
    convert_dataset(o);
    CHECK(fixture::file_hash(o.output) == first);
}

TEST_CASE("missing directories and formats are reported") {
    ConvertOptions o;
    o.images_dir = "/nonexistent/images";
    o.annotations_dir = "/nonexistent/labels";
    o.output = "/tmp/never.jsonl";
    try {
        convert_dataset(o);
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
    try {
        parse_annotation_format("coco");
        FAIL("expected UnknownFormat");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownFormat);
    }
}

}  // TEST_SUITE
