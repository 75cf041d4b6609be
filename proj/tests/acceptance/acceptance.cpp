// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "shipvl/answer_codec.hpp"
#include "shipvl/eval.hpp"
#include "shipvl/fusion/generator.hpp"
#include "shipvl/fusion/tokenizer.hpp"
#include "shipvl/fusion/train.hpp"
#include "shipvl/geometry.hpp"
#include "shipvl/labeling.hpp"
#include "shipvl/report.hpp"
#include "shipvl/segment.hpp"
#include "shipvl/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace shipvl;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---- A1 -------------------------------------------------------------------

Outcome geometry_oracle() {
    const auto t0 = Clock::now();
    Rng rng(1001);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Quad qa = oracle::random_convex_quad(rng);
        const Quad qb = oracle::random_convex_quad(rng);
        const double exact = quad_iou(canonicalize_quad(qa, CoordSpace::normalized()),
                                      canonicalize_quad(qb, CoordSpace::normalized()));
        worst = std::max(worst, std::abs(exact - oracle::raster_iou(oracle::to_vec(qa), oracle::to_vec(qb), 1000)));
    }
    // Same square about the same centre, axis-aligned and turned by 45 degrees.
    Quad axis{}, rotated{};
    for (int k = 0; k < 4; ++k) {
        const double t = M_PI / 4 + k * M_PI / 2;
        axis[k] = {0.5 + 0.35 * std::cos(t), 0.5 + 0.35 * std::sin(t)};
        rotated[k] = {0.5 + 0.35 * std::cos(t + M_PI / 4), 0.5 + 0.35 * std::sin(t + M_PI / 4)};
    }
    const double analytic = quad_iou(canonicalize_quad(axis, CoordSpace::normalized()),
                                     canonicalize_quad(rotated, CoordSpace::normalized()));
    const double analytic_err = std::abs(analytic - 1.0 / std::sqrt(2.0));
    const double secs = seconds_since(t0);
    return {worst <= 2e-3 && analytic_err <= 1e-6 && secs < 30.0,
            fmt("max |quad_iou - raster| = %.2e (tol 2e-3) over 1000 pairs; 1/sqrt2 case err %.1e (tol 1e-6); %.1f s (limit 30 s)",
                worst, analytic_err, secs)};
}

// ---- A2 -------------------------------------------------------------------

void random_instance(Rng& rng, std::vector<Detection>& preds, std::vector<GroundTruth>& gts) {
    const int images = static_cast<int>(rng.uniform_int(1, 4));
    for (int im = 0; im < images; ++im) {
        GroundTruth g{"im" + std::to_string(im), {}};
        const int n = static_cast<int>(rng.uniform_int(1, 6));
        int placed = 0;
        for (int i = 0; i < n; ++i) {
            const double x = rng.uniform(0, 0.8), y = rng.uniform(0, 0.8);
            const HBox b = make_hbox(x, y, x + rng.uniform(0.05, 0.2), y + rng.uniform(0.05, 0.2));
            g.boxes.push_back(b);
            const int copies = static_cast<int>(rng.uniform_int(0, 1));
            for (int c = 0; c < copies && placed < 10; ++c, ++placed) {
                const double dx = rng.uniform(-0.05, 0.05), dy = rng.uniform(-0.05, 0.05);
                preds.push_back({g.image_id,
                                 make_hbox(std::max(0.0, b.x_min + dx), std::max(0.0, b.y_min + dy),
                                           std::min(1.0, b.x_max + dx), std::min(1.0, b.y_max + dy)),
                                 rng.uniform()});
            }
        }
        const int clutter = static_cast<int>(rng.uniform_int(0, 3));
        for (int i = 0; i < clutter && placed < 10; ++i, ++placed) {
            const double x = rng.uniform(0, 0.8), y = rng.uniform(0, 0.8);
            preds.push_back({g.image_id, make_hbox(x, y, x + 0.1, y + 0.1), rng.uniform()});
        }
        gts.push_back(std::move(g));
    }
}

Outcome ap_oracle() {
    Rng rng(2002);
    double worst = 0.0;
    int monotone_violations = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Detection> preds;
        std::vector<GroundTruth> gts;
        random_instance(rng, preds, gts);
        const EvalReport rep = evaluate(preds, gts, Task::hbb, {0.4, 0.5, 0.6});
        for (const auto& r : rep.results) {
            worst = std::max(worst, std::abs(r.ap - oracle::enumerate_ap(preds, gts, r.iou_threshold)));
        }
        if (!(rep.at(0.6)->ap <= rep.at(0.5)->ap && rep.at(0.5)->ap <= rep.at(0.4)->ap)) ++monotone_violations;
    }
    return {worst <= 1e-9 && monotone_violations == 0,
            fmt("max |AP - enumeration| = %.1e (tol 1e-9) on 50 instances; monotonicity violations %d", worst,
                monotone_violations)};
}

// ---- A3 -------------------------------------------------------------------

Outcome adapter_identity() {
    using namespace fusion;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        ToyModelConfig c;
        c.seed = seed;
        ToyModel model(c);
        Rng rng(seed + 50);
        const auto visual = model.encode(render_scene(rng).image);
        const auto ids = Tokenizer::standard().encode(build_instruction(Task::hbb) + " [0.100, 0.200, 0.500, 0.600]");
        worst = std::max(worst, (model.forward(visual, ids) - model.forward_unadapted(visual, ids)).cwiseAbs().maxCoeff());
    }

    Rng rng(3003);
    BiasScaleLinear layer;
    layer.base = Mat(24, 16);
    for (Eigen::Index i = 0; i < layer.base.size(); ++i) layer.base.data()[i] = rng.normal();
    layer.bias = Mat::Zero(1, 24);
    layer.scale = Mat::Ones(1, 24);
    Mat x(9, 16);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const LinearView frozen{&layer.base, nullptr, nullptr, 0.0, nullptr, nullptr};
    const Mat expect = linear_forward(frozen, x);
    const Mat got = layer.forward(x);
    const bool exact = std::equal(got.data(), got.data() + got.size(), expect.data());
    return {worst <= 1e-6 && exact,
            fmt("zero-init LoRA max abs diff %.1e (tol 1e-6) over 4 seeds; bias=0/scale=1 bitwise equal: %s", worst,
                exact ? "yes" : "no")};
}

// ---- A4 -------------------------------------------------------------------

Outcome gradient_check() {
    using namespace fusion;
    const auto t0 = Clock::now();
    ToyModel model(gradcheck::small_config());
    model.enable_bias_scale(3);
    gradcheck::perturb_adapters(model, 5);
    const auto batch = gradcheck::small_batch(model);
    const auto report = gradcheck::run(model, batch, 6);
    std::string detail;
    bool pass = true;
    for (ParamClass cls : all_trainable_classes()) {
        const auto it = report.find(std::string(to_string(cls)));
        if (it == report.end() || it->second.probes == 0) {
            pass = false;
            detail += std::string(to_string(cls)) + "=unprobed ";
            continue;
        }
        pass = pass && it->second.worst <= 1e-4;
        detail += fmt("%s=%.1e ", std::string(to_string(cls)).c_str(), it->second.worst);
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 300.0;
    return {pass, "worst rel err per class (tol 1e-4): " + detail + fmt("; %.1f s (limit 300 s)", secs)};
}

// ---- A5 -------------------------------------------------------------------

constexpr int kAlignmentSteps = 100;
constexpr int kShipSteps = 600;

Outcome learning_signal() {
    using namespace fusion;
    const auto t0 = Clock::now();
    ToyModel model(ToyModelConfig{});
    SyntheticDatasetOptions o;
    o.count = 32;
    o.seed = 1;
    const auto samples = make_synthetic_samples(o);
    const std::string instruction = build_instruction(Task::hbb);
    std::vector<TrainingExample> data;
    for (const auto& s : samples) {
        data.push_back(model.make_example(s.scene.image, instruction,
                                          serialize_answer(std::span<const HBox>(s.scene.boxes))));
    }
    TrainConfig tc;
    tc.steps = kAlignmentSteps;
    const TrainResult first = train_stage(model, data, Stage::alignment, tc);
    tc.steps = kShipSteps;
    const TrainResult second = train_stage(model, data, Stage::ship_adaption, tc);
    const double ratio = second.final_loss / first.initial_loss;
    const double ratio_at_500 = second.losses.at(500 - kAlignmentSteps) / first.initial_loss;

    int hits = 0;
    for (const auto& s : samples) {
        const DetectionAnswer answer = parse_answer(decode_answer(model, s.scene.image, instruction).text, Task::hbb);
        if (!answer.boxes.empty() && box_iou(answer.boxes.front(), Box(s.scene.boxes.front())) >= 0.5) ++hits;
    }
    const double secs = seconds_since(t0);
    const double hit_rate = hits / 32.0;
    return {ratio < 0.1 && hit_rate >= 0.9 && secs < 900.0,
            fmt("%d+%d steps: final/initial loss %.4f (need < 0.1; %.4f at step 500); %d/32 decoded boxes IoU >= 0.5 "
                "(need >= 90%%); %.0f s (limit 900 s)",
                kAlignmentSteps, kShipSteps, ratio, ratio_at_500, hits, secs)};
}

// ---- A6 -------------------------------------------------------------------

// Random valid UTF-8, biased toward characters the grammar cares about.
std::string random_utf8(Rng& rng) {
    static const std::string alphabet = "[],. -+0123456789eE\n\tabcxyz";
    const int len = static_cast<int>(rng.uniform_int(0, 80));
    std::string s;
    for (int i = 0; i < len; ++i) {
        const double u = rng.uniform();
        if (u < 0.7) {
            s += alphabet[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(alphabet.size()) - 1))];
            continue;
        }
        std::uint32_t cp = 0;
        do {
            cp = static_cast<std::uint32_t>(u < 0.85 ? rng.uniform_int(1, 0x7F) : rng.uniform_int(0x80, 0x10FFFF));
        } while (cp >= 0xD800 && cp <= 0xDFFF);
        if (cp < 0x80) {
            s += static_cast<char>(cp);
        } else if (cp < 0x800) {
            s += static_cast<char>(0xC0 | (cp >> 6));
            s += static_cast<char>(0x80 | (cp & 0x3F));
        } else if (cp < 0x10000) {
            s += static_cast<char>(0xE0 | (cp >> 12));
            s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            s += static_cast<char>(0x80 | (cp & 0x3F));
        } else {
            s += static_cast<char>(0xF0 | (cp >> 18));
            s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
            s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            s += static_cast<char>(0x80 | (cp & 0x3F));
        }
    }
    return s;
}

// A valid answer with random byte edits, so fuzzing also reaches the box paths.
std::string mutated_answer(Rng& rng) {
    std::vector<HBox> boxes;
    const int n = static_cast<int>(rng.uniform_int(1, 3));
    for (int i = 0; i < n; ++i) {
        const double x0 = rng.uniform(0, 0.9), y0 = rng.uniform(0, 0.9);
        boxes.push_back(make_hbox(x0, y0, rng.uniform(x0 + 0.01, 1.0), rng.uniform(y0 + 0.01, 1.0)));
    }
    std::string s = serialize_answer(std::span<const HBox>(boxes));
    const int edits = static_cast<int>(rng.uniform_int(0, 4));
    for (int e = 0; e < edits && !s.empty(); ++e) {
        const auto pos = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(s.size()) - 1));
        static const std::string glyphs = "[],;. -0123456789e";
        if (rng.uniform() < 0.5) {
            s.erase(pos, 1);
        } else {
            s.insert(pos, 1, glyphs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(glyphs.size()) - 1))]);
        }
    }
    return s;
}

Outcome codec_totality() {
    Rng rng(6006);
    int crashes = 0;
    std::size_t boxes_seen = 0;
    for (int i = 0; i < 100000; ++i) {
        const std::string text = i % 4 == 2 ? mutated_answer(rng) : random_utf8(rng);
        try {
            boxes_seen += parse_answer(text, i % 2 ? Task::obb : Task::hbb).boxes.size();
        } catch (...) {
            ++crashes;
        }
    }

    int mismatches = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<HBox> boxes;
        const int n = static_cast<int>(rng.uniform_int(0, 5));
        for (int i = 0; i < n; ++i) {
            const double x0 = rng.uniform(0, 0.9), y0 = rng.uniform(0, 0.9);
            boxes.push_back(make_hbox(x0, y0, rng.uniform(x0 + 0.01, 1.0), rng.uniform(y0 + 0.01, 1.0)));
        }
        std::vector<HBox> expect;
        for (const auto& b : boxes) {
            expect.push_back(make_hbox(std::round(b.x_min * 1000) / 1000, std::round(b.y_min * 1000) / 1000,
                                       std::round(b.x_max * 1000) / 1000, std::round(b.y_max * 1000) / 1000));
        }
        std::stable_sort(expect.begin(), expect.end(), [](const HBox& a, const HBox& b) {
            return a.y_min != b.y_min ? a.y_min < b.y_min : a.x_min < b.x_min;
        });
        const auto parsed = parse_answer(serialize_answer(std::span<const HBox>(boxes)), Task::hbb);
        bool same = parsed.boxes.size() == expect.size();
        for (std::size_t i = 0; same && i < expect.size(); ++i) {
            const auto& h = std::get<HBox>(parsed.boxes[i]);
            same = h.x_min == expect[i].x_min && h.y_min == expect[i].y_min && h.x_max == expect[i].x_max &&
                   h.y_max == expect[i].y_max;
        }
        if (!same) ++mismatches;
    }
    return {crashes == 0 && mismatches == 0,
            fmt("100000 fuzz strings (1 in 4 mutated answers): %d exceptions (%zu boxes recovered); 10000 round-trips: %d mismatches", crashes,
                boxes_seen, mismatches)};
}

// ---- A7 -------------------------------------------------------------------

Outcome pipeline_determinism() {
    fixture::TempDir dir;
    const std::string root = dir.path().string();
    if (fixture::cli({"-q", "synth", "--out", root + "/data", "--count", "8", "--max-ships", "3", "--seed", "7"}).code != 0) {
        return {false, "synth failed"};
    }
    const std::vector<std::string> convert{"-q", "convert", "--images", root + "/data/images", "--annotations",
                                           root + "/data/labels", "--task", "obb", "--out", root + "/obb.jsonl"};
    std::vector<std::uint64_t> hashes;
    for (int run = 0; run < 2; ++run) {
        if (fixture::cli(convert).code != 0) return {false, "convert failed"};
        hashes.push_back(fixture::file_hash(root + "/obb.jsonl"));
    }

    // Predictions: ground truth with jitter, so the report has nontrivial AP.
    std::string preds;
    Rng rng(77);
    for (const auto& line : fixture::read_lines(root + "/data/gt_hbb.jsonl")) {
        const auto g = nlohmann::json::parse(line);
        for (const auto& b : g["boxes"]) {
            const double d = rng.uniform(-0.03, 0.03);
            preds += nlohmann::json{{"image_id", g["image_id"]},
                                    {"task", "hbb"},
                                    {"box", {std::clamp(b[0].get<double>() + d, 0.0, 1.0), b[1], b[2],
                                             std::clamp(b[3].get<double>() + d, 0.0, 1.0)}},
                                    {"confidence", rng.uniform()}}
                         .dump() +
                     "\n";
        }
    }
    fixture::write_text(dir / "preds.jsonl", preds);
    const std::vector<std::string> eval{"eval", "--preds", root + "/preds.jsonl", "--gt", root + "/data/gt_hbb.jsonl",
                                        "--out", root + "/report.json"};
    std::vector<std::uint64_t> eval_hashes;
    std::vector<std::string> eval_stdout;
    for (int run = 0; run < 2; ++run) {
        const auto r = fixture::cli(eval);
        if (r.code != 0) return {false, "eval failed: " + r.err};
        eval_hashes.push_back(fixture::file_hash(root + "/report.json"));
        eval_stdout.push_back(r.out);
    }
    const bool pass = hashes[0] == hashes[1] && eval_hashes[0] == eval_hashes[1] && eval_stdout[0] == eval_stdout[1];
    return {pass, fmt("convert output hash %016llx / %016llx; eval report hash %016llx / %016llx",
                      static_cast<unsigned long long>(hashes[0]), static_cast<unsigned long long>(hashes[1]),
                      static_cast<unsigned long long>(eval_hashes[0]), static_cast<unsigned long long>(eval_hashes[1]))};
}

// ---- A8 -------------------------------------------------------------------

Outcome segmentation_fixture() {
    const ImageSize size{100, 80};
    GrayImage img(size.width, size.height, 0.1f);
    for (int y = 30; y < 50; ++y)
        for (int x = 30; x < 70; ++x) img.at(x, y) = 0.9f;
    const CoordSpace px = CoordSpace::pixel(size.width, size.height);
    const MaskImage truth = box_mask(size, make_hbox(30, 30, 70, 50, px));
    const HBox loose = make_hbox(24, 25, 76, 56, px);
    const auto thr = segment(img, PromptSet{size, {loose}, {}}, ThresholdSegmenter{});
    const double thr_iou = thr.masks.empty() ? 0.0 : mask_metrics(thr.masks[0], truth).iou;
    const auto fill = segment(img, PromptSet{size, {loose}, {}}, BoxFillSegmenter{});
    const double fill_iou = fill.masks.empty() ? 0.0 : mask_metrics(fill.masks[0], box_mask(size, loose)).iou;
    return {thr_iou >= 0.95 && fill_iou == 1.0,
            fmt("threshold mask IoU %.4f (need >= 0.95); box-fill IoU vs prompt %.4f (need 1.0)", thr_iou, fill_iou)};
}

// ---- A9 -------------------------------------------------------------------

Outcome report_fidelity() {
    EvalReport r;
    r.method = "shipvl";
    r.dataset = "DOTA-ship";
    for (auto [t, ap] : {std::pair{0.4, 0.5668}, std::pair{0.5, 0.5530}, std::pair{0.6, 0.5353}}) {
        ThresholdResult x;
        x.iou_threshold = t;
        x.ap = ap;
        r.results.push_back(x);
    }
    const auto table = report_table(std::span<const EvalReport>(&r, 1));
    const bool columns = table.columns == std::vector<std::string>{"method", "dataset", "AP@40", "AP@50", "AP@60"};
    const bool row = table.rows.size() == 1 && table.rows[0][2] == "56.68" && table.rows[0][3] == "55.30" &&
                     table.rows[0][4] == "53.53";
    const std::string text = format_report(r, ReportStyle::table);
    const bool rendered = text.find("56.68  55.30  53.53") != std::string::npos;
    return {columns && row && rendered, fmt("row cells %s / %s / %s; columns in order: %s",
                                            row ? "56.68" : "?", row ? "55.30" : "?", row ? "53.53" : "?",
                                            columns ? "yes" : "no")};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"A1 geometry oracle", geometry_oracle},     {"A2 AP oracle", ap_oracle},
        {"A3 adapter identity", adapter_identity},  {"A4 gradient check", gradient_check},
        {"A5 learning signal", learning_signal},    {"A6 codec totality", codec_totality},
        {"A7 pipeline determinism", pipeline_determinism}, {"A8 segmentation", segmentation_fixture},
        {"A9 report fidelity", report_fidelity}};
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
