#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "shipvl/answer_codec.hpp"
#include "shipvl/rng.hpp"
#include "support/oracles.hpp"

using namespace shipvl;

namespace {

bool has_kind(const std::vector<Diagnostic>& d, Diagnostic::Kind k) {
    return std::any_of(d.begin(), d.end(), [&](const Diagnostic& x) { return x.kind == k; });
}

HBox random_hbox(Rng& rng) {
    const double x0 = rng.uniform(0, 0.9), y0 = rng.uniform(0, 0.9);
    return make_hbox(x0, y0, rng.uniform(x0 + 0.01, 1.0), rng.uniform(y0 + 0.01, 1.0));
}

}  // namespace

TEST_SUITE("answer_codec") {

TEST_CASE("single box renders with three decimals") {
    const std::vector<HBox> one{make_hbox(0.1, 0.2, 0.5, 0.6)};
    CHECK(serialize_answer(std::span<const HBox>(one)) == "[0.100, 0.200, 0.500, 0.600]");
}

TEST_CASE("empty list renders the fixed sentence") {
    CHECK(serialize_answer(std::span<const HBox>()) == "No ship is detected.");
    CHECK(parse_answer("No ship is detected.", Task::hbb).boxes.empty());
}

TEST_CASE("multiple boxes are ordered by y_min then x_min and joined") {
    const std::vector<HBox> two{make_hbox(0.5, 0.5, 0.6, 0.6), make_hbox(0.1, 0.1, 0.2, 0.2)};
    CHECK(serialize_answer(std::span<const HBox>(two)) == "[0.100, 0.100, 0.200, 0.200]; [0.500, 0.500, 0.600, 0.600]");
}

TEST_CASE("obb answers carry eight canonical coordinates") {
    const Quad q{{{0.5, 0.5}, {0.1, 0.1}, {0.5, 0.1}, {0.1, 0.5}}};
    const std::vector<OBox> boxes{canonicalize_quad(q, CoordSpace::normalized())};
    CHECK(serialize_answer(std::span<const OBox>(boxes)) ==
          "[0.100, 0.100, 0.500, 0.100, 0.500, 0.500, 0.100, 0.500]");
    const std::vector<OBox> raw{OBox::raw(q)};
    try {
        serialize_answer(std::span<const OBox>(raw));
        FAIL("expected NonCanonicalBox");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonCanonicalBox);
    }
}

TEST_CASE("pixel-space boxes cannot be serialized") {
    const std::vector<HBox> px{make_hbox(1, 2, 3, 4, CoordSpace::pixel(10, 10))};
    CHECK_THROWS_AS(serialize_answer(std::span<const HBox>(px)), Error);
}

TEST_CASE("parser tolerates surrounding prose") {
    const auto a = parse_answer("Sure! The ships: [0.100, 0.200, 0.500, 0.600]", Task::hbb);
    REQUIRE(a.boxes.size() == 1);
    const auto& h = std::get<HBox>(a.boxes[0]);
    CHECK(h.x_min == 0.1);
    CHECK(h.y_min == 0.2);
    CHECK(h.x_max == 0.5);
    CHECK(h.y_max == 0.6);
    CHECK(a.warnings.empty());
}

TEST_CASE("wrong arity groups are skipped with a warning") {
    const auto a = parse_answer("[0.1, 0.2, 0.5]", Task::hbb);
    CHECK(a.boxes.empty());
    REQUIRE(a.warnings.size() == 1);
    CHECK(a.warnings[0].kind == Diagnostic::Kind::arity_mismatch);
}

TEST_CASE("flexible whitespace and precision") {
    const auto a = parse_answer("[ 0.1,0.25 ,  0.5 ,0.6000 ];[0.7,0.7,0.8,0.9]", Task::hbb);
    CHECK(a.boxes.size() == 2);
}

TEST_CASE("out-of-range values are clamped and inverted corners swapped") {
    const auto a = parse_answer("[-0.1, 0.2, 1.3, 0.6]", Task::hbb);
    REQUIRE(a.boxes.size() == 1);
    CHECK(std::get<HBox>(a.boxes[0]).x_min == 0.0);
    CHECK(std::get<HBox>(a.boxes[0]).x_max == 1.0);
    CHECK(has_kind(a.warnings, Diagnostic::Kind::clamped));

    const auto s = parse_answer("[0.5, 0.2, 0.1, 0.6]", Task::hbb);
    REQUIRE(s.boxes.size() == 1);
    CHECK(std::get<HBox>(s.boxes[0]).x_min == 0.1);
    CHECK(has_kind(s.warnings, Diagnostic::Kind::swapped));
    CHECK(has_kind(validate_answer(s), Diagnostic::Kind::swapped));
}

TEST_CASE("validation reports duplicates and accepts clean answers") {
    CHECK(validate_answer(parse_answer("[0.1, 0.2, 0.5, 0.6]", Task::hbb)).empty());
    const auto dup = parse_answer("[0.1, 0.2, 0.5, 0.6]; [0.1, 0.2, 0.5, 0.6]", Task::hbb);
    CHECK(has_kind(validate_answer(dup), Diagnostic::Kind::duplicate));
    ParseOptions opts;
    opts.deduplicate = true;
    const auto dedup = parse_answer("[0.1, 0.2, 0.5, 0.6]; [0.1, 0.2, 0.5, 0.6]", Task::hbb, opts);
    CHECK(dedup.boxes.size() == 1);
    CHECK(has_kind(dedup.warnings, Diagnostic::Kind::deduplicated));
}

TEST_CASE("obb groups are canonicalized on parse") {
    const auto a = parse_answer("[0.5, 0.5, 0.1, 0.1, 0.5, 0.1, 0.1, 0.5]", Task::obb);
    REQUIRE(a.boxes.size() == 1);
    const auto& o = std::get<OBox>(a.boxes[0]);
    CHECK(o.canonical());
    CHECK(o[0] == Point{0.1, 0.1});
    const auto bad = parse_answer("[0, 0, 0.5, 0.5, 1, 1, 0.2, 0.2]", Task::obb);
    CHECK(bad.boxes.empty());
    CHECK(has_kind(bad.warnings, Diagnostic::Kind::degenerate));
}

TEST_CASE("nested and unbalanced brackets never throw") {
    for (const char* s : {"[[0.1, 0.2, 0.5, 0.6]", "[0.1, 0.2", "]]][[", "[a, b, c, d]", "[1e400, 0, 0, 0]", "[nan, 0, 1, 1]",
                          "[0x1p-3, 0.2, 0.5, 0.6]", ""}) {
        CHECK_NOTHROW(parse_answer(s, Task::hbb));
        CHECK_NOTHROW(parse_answer(s, Task::obb));
    }
    CHECK(parse_answer("[[0.1, 0.2, 0.5, 0.6]", Task::hbb).boxes.size() == 1);
}

TEST_CASE("round trip is exact at three decimals") {
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<HBox> boxes;
        const int n = static_cast<int>(rng.uniform_int(0, 4));
        for (int i = 0; i < n; ++i) boxes.push_back(random_hbox(rng));
        const std::string text = serialize_answer(std::span<const HBox>(boxes));
        const auto parsed = parse_answer(text, Task::hbb);
        REQUIRE(parsed.boxes.size() == boxes.size());
        std::vector<HBox> expect;
        for (const auto& b : boxes) expect.push_back({quantize(b.x_min), quantize(b.y_min), quantize(b.x_max), quantize(b.y_max)});
        std::stable_sort(expect.begin(), expect.end(), [](const HBox& a, const HBox& b) {
            return a.y_min != b.y_min ? a.y_min < b.y_min : a.x_min < b.x_min;
        });
        for (std::size_t i = 0; i < expect.size(); ++i) {
            const auto& h = std::get<HBox>(parsed.boxes[i]);
            CHECK(h.x_min == expect[i].x_min);
            CHECK(h.y_min == expect[i].y_min);
            CHECK(h.x_max == expect[i].x_max);
            CHECK(h.y_max == expect[i].y_max);
        }
    }
}

TEST_CASE("obb round trip re-serializes identically") {
    Rng rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<OBox> boxes{canonicalize_quad(oracle::random_convex_quad(rng), CoordSpace::normalized())};
        const std::string text = serialize_answer(std::span<const OBox>(boxes));
        const auto parsed = parse_answer(text, Task::obb);
        REQUIRE(parsed.boxes.size() == 1);
        CHECK(serialize_answer(std::span<const Box>(parsed.boxes), Task::obb) == text);
    }
}

}  // TEST_SUITE
