#include "shipvl/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "shipvl/error.hpp"
#include "shipvl/eval.hpp"
#include "shipvl/fusion/checkpoint.hpp"
#include "shipvl/fusion/generator.hpp"
#include "shipvl/fusion/train.hpp"
#include "shipvl/labeling.hpp"
#include "shipvl/report.hpp"
#include "shipvl/segment.hpp"
#include "shipvl/synthetic.hpp"

namespace shipvl {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Context {
    std::vector<std::string> args;
    std::ostream& out;
    std::ostream& err;
    bool quiet = false;

    void warn(const std::string& message) const {
        if (!quiet) err << "warning: " << message << '\n';
    }
    void info(const std::string& message) const {
        if (!quiet) err << message << '\n';
    }
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

fs::path snapshot_path_for_file(const fs::path& output) { return fs::path(output.string() + ".config.json"); }

// The snapshot records the exact argument vector (with the resolved seed pinned)
// plus the resolved settings; `shipvl replay` re-executes the argument vector.
void write_snapshot(const fs::path& path, const std::string& command, const std::vector<std::string>& args,
                    const ordered_json& resolved) {
    ordered_json j;
    j["tool"] = "shipvl";
    j["version"] = SHIPVL_VERSION;
    j["command"] = command;
    j["argv"] = args;
    j["resolved"] = resolved;
    write_text(path, j.dump(2) + "\n");
}

// Replaces any --seed flag with the resolved value so replays ignore the environment.
std::vector<std::string> pin_seed(const std::vector<std::string>& args, std::uint64_t seed) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--seed") {
            ++i;
            continue;
        }
        if (args[i].rfind("--seed=", 0) == 0) continue;
        out.push_back(args[i]);
    }
    out.push_back("--seed");
    out.push_back(std::to_string(seed));
    return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) fail(ErrorCode::IoError, "image directory not readable: " + dir.string());
    std::vector<fs::path> files;
    const auto& exts = image_extensions();
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (std::find(exts.begin(), exts.end(), ext) != exts.end()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        return a.stem().string() != b.stem().string() ? a.stem().string() < b.stem().string()
                                                      : a.filename().string() < b.filename().string();
    });
    return files;
}

// ---- convert ---------------------------------------------------------------

struct ConvertArgs {
    std::string format = "dota";
    std::string task = "hbb";
    std::string images;
    std::string annotations;
    std::string out;
    bool strict = false;
    bool drop_empty = false;
    bool augment = false;
    std::uint64_t seed = 0;
    std::string dataset;
    std::string modality;
    std::vector<std::string> ship_classes{"ship"};
};

int cmd_convert(const Context& ctx, const ConvertArgs& a) {
    ConvertOptions o;
    o.format = parse_annotation_format(a.format);
    o.task = parse_task(a.task);
    o.images_dir = a.images;
    o.annotations_dir = a.annotations;
    o.output = a.out;
    o.strict = a.strict;
    o.keep_empty = !a.drop_empty;
    o.instruction = {a.augment, a.seed};
    if (!a.dataset.empty()) o.source_dataset = a.dataset;
    if (!a.modality.empty()) o.modality = parse_modality(a.modality);
    o.ship_classes = a.ship_classes;

    const ConversionStats stats = convert_dataset(o);
    ordered_json resolved{{"format", a.format}, {"task", a.task},     {"images", a.images},
                          {"annotations", a.annotations}, {"out", a.out}, {"strict", a.strict},
                          {"keep_empty", o.keep_empty}, {"augment", a.augment}, {"seed", a.seed},
                          {"ship_classes", a.ship_classes}};
    write_snapshot(snapshot_path_for_file(a.out), "convert", ctx.args, resolved);
    ctx.out << stats.to_json().dump(2) << '\n';
    const bool partial = stats.objects_dropped > 0 || stats.malformed_lines > 0 || stats.images_skipped > 0;
    return partial ? kExitWarnings : kExitOk;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
    std::string out;
    int count = 32;
    std::optional<std::uint64_t> seed;
    int size = 40;
    int min_ships = 1;
    int max_ships = 1;
    double noise = 0.02;
};

int cmd_synth(const Context& ctx, const SynthArgs& a) {
    SyntheticDatasetOptions o;
    o.count = a.count;
    o.seed = resolve_seed(a.seed, std::nullopt).value_or(1);
    o.scene.size = a.size;
    o.scene.min_ships = a.min_ships;
    o.scene.max_ships = a.max_ships;
    o.scene.noise = a.noise;
    const auto samples = write_synthetic_dataset(a.out, o);
    std::size_t boxes = 0;
    for (const auto& s : samples) boxes += s.scene.boxes.size();
    write_snapshot(fs::path(a.out) / "config.json", "synth", pin_seed(ctx.args, o.seed),
                   {{"out", a.out}, {"count", a.count}, {"seed", o.seed}, {"size", a.size},
                    {"min_ships", a.min_ships}, {"max_ships", a.max_ships}, {"noise", a.noise}});
    ctx.out << ordered_json{{"images", samples.size()}, {"boxes", boxes}, {"out", a.out}}.dump(2) << '\n';
    return kExitOk;
}

// ---- train-toy -------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string images;
    std::string stage = "alignment";
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string init;
    std::string out;
    std::string loss_csv;
    std::optional<int> steps;
    int log_every = 50;
};

int cmd_train(const Context& ctx, const TrainArgs& a) {
    const fusion::Stage stage = fusion::parse_stage(a.stage);
    nlohmann::json cfg = nlohmann::json::object();
    if (!a.config.empty()) {
        try {
            cfg = nlohmann::json::parse(read_text(a.config));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::FormatError, a.config + ": " + e.what());
        }
    }
    std::optional<std::uint64_t> config_seed;
    if (cfg.contains("seed")) config_seed = cfg.at("seed").get<std::uint64_t>();
    const std::uint64_t seed = resolve_seed(a.seed, config_seed).value_or(0);

    fusion::TrainConfig tc = fusion::TrainConfig::from_json(cfg.value("train", nlohmann::json::object()));
    tc.seed = seed;
    if (a.steps) tc.steps = *a.steps;

    std::optional<fusion::ToyModel> model;
    ordered_json stages = ordered_json::array();
    if (!a.init.empty()) {
        auto loaded = fusion::load_checkpoint(a.init);
        model.emplace(std::move(loaded.model));
        if (loaded.metadata.contains("stages")) stages = loaded.metadata.at("stages");
    } else {
        fusion::ToyModelConfig mc = fusion::ToyModelConfig::from_json(cfg.value("model", nlohmann::json::object()));
        mc.seed = seed;
        model.emplace(mc);
    }

    const auto records = read_records(a.data);
    const fs::path images_dir = a.images.empty() ? fs::path(a.data).parent_path() / "images" : fs::path(a.images);
    std::vector<fusion::TrainingExample> examples;
    examples.reserve(records.size());
    for (const InstructionRecord& r : records) {
        examples.push_back(model->make_example(read_image(images_dir / r.image), r.instruction, r.answer));
    }
    ctx.info("training " + std::string(fusion::to_string(stage)) + " on " + std::to_string(examples.size()) +
             " records for " + std::to_string(tc.steps) + " steps");

    fusion::TrainResult result;
    try {
        result = fusion::train_stage(*model, examples, stage, tc, [&](int step, double loss) {
            if (a.log_every > 0 && step % a.log_every == 0) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "step %d loss %.6f", step, loss);
                ctx.info(buf);
            }
        });
    } catch (const Error& e) {
        if (e.code() == ErrorCode::DivergenceDetected) {
            ctx.err << "error: " << e.what() << '\n';
            return kExitFatal;
        }
        throw;
    }

    stages.push_back({{"stage", std::string(fusion::to_string(stage))},
                      {"steps", tc.steps},
                      {"records", examples.size()},
                      {"initial_loss", result.initial_loss},
                      {"final_loss", result.final_loss}});
    fusion::save_checkpoint(*model, a.out, {{"stages", stages}});

    const fs::path csv = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
    std::string text = "step,loss,smoothed\n";
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i, result.losses[i], result.smoothed[i]);
        text += buf;
    }
    write_text(csv, text);

    ordered_json resolved{{"data", a.data},        {"images", images_dir.string()}, {"stage", a.stage},
                          {"config", a.config},    {"init", a.init},                {"out", a.out},
                          {"seed", seed},          {"train", tc.to_json()},         {"model", model->config().to_json()}};
    write_snapshot(snapshot_path_for_file(a.out), "train-toy", pin_seed(ctx.args, seed), resolved);
    ctx.out << ordered_json{{"stage", std::string(fusion::to_string(stage))},
                            {"steps", tc.steps},
                            {"initial_loss", result.initial_loss},
                            {"final_loss", result.final_loss},
                            {"trainable_parameters", result.trainable_parameters},
                            {"total_parameters", model->parameter_count()},
                            {"checkpoint", a.out},
                            {"loss_csv", csv.string()}}
                   .dump(2)
            << '\n';
    return kExitOk;
}

// ---- infer -----------------------------------------------------------------

struct InferArgs {
    std::string model;
    std::string scripted;
    std::string images;
    std::string task = "hbb";
    std::string scorer = "default";
    std::string out;
    std::string instruction;
};

int cmd_infer(const Context& ctx, const InferArgs& a) {
    const Task task = parse_task(a.task);
    if (task == Task::caption) fail(ErrorCode::InvalidArgument, "infer needs a detection task (hbb or obb)");
    if (a.model.empty() == a.scripted.empty()) fail(ErrorCode::InvalidArgument, "give exactly one of --model or --scripted");

    std::optional<fusion::ToyModel> model;
    std::unique_ptr<fusion::AnswerGenerator> generator;
    if (!a.model.empty()) {
        model.emplace(fusion::load_checkpoint(a.model).model);
        generator = std::make_unique<fusion::ModelGenerator>(*model);
    } else {
        generator = std::make_unique<fusion::ScriptedModel>(fusion::ScriptedModel::load(a.scripted));
    }
    const auto scorer = make_scorer(a.scorer);
    const std::string instruction = a.instruction.empty() ? build_instruction(task) : a.instruction;

    std::string lines;
    std::size_t warnings = 0, images = 0, boxes = 0, failures = 0;
    for (const fs::path& path : list_images(a.images)) {
        const std::string image_id = path.stem().string();
        ++images;
        try {
            const GrayImage image = read_image(path);
            const fusion::Generation gen = generator->generate(image, image_id, instruction);
            for (const auto& w : gen.warnings) {
                ++warnings;
                ctx.warn(image_id + ": " + w);
            }
            const DetectionAnswer answer = parse_answer(gen.text, task);
            for (const Diagnostic& d : answer.warnings) {
                ++warnings;
                ctx.warn(image_id + ": " + d.message);
            }
            if (answer.boxes.empty() && gen.text != kEmptyAnswer) {
                ++warnings;
                ctx.warn(image_id + ": generation has no parseable box");
            }
            for (const Box& box : answer.boxes) {
                Detection d{image_id, box, 0.0};
                try {
                    d.confidence = score_confidence(*scorer, image, box);
                } catch (const Error& e) {
                    ++warnings;
                    ctx.warn(image_id + ": box skipped: " + e.what());
                    continue;
                }
                lines += prediction_to_json(d, task).dump() + "\n";
                ++boxes;
            }
        } catch (const Error& e) {
            ++failures;
            ctx.warn(image_id + ": " + e.what());
        }
    }
    write_text(a.out, lines);
    write_snapshot(snapshot_path_for_file(a.out), "infer", ctx.args,
                   {{"model", a.model}, {"scripted", a.scripted}, {"images", a.images}, {"task", a.task},
                    {"scorer", a.scorer}, {"instruction", instruction}, {"out", a.out}});
    ctx.out << ordered_json{{"images", images}, {"predictions", boxes}, {"warnings", warnings}, {"failures", failures}}.dump(2)
            << '\n';
    return warnings + failures > 0 ? kExitWarnings : kExitOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string preds;
    std::string gt;
    std::string task = "hbb";
    std::vector<double> iou{0.4, 0.5, 0.6};
    std::string out;
    std::string method = "shipvl";
    std::string dataset;
};

int cmd_eval(const Context& ctx, const EvalArgs& a) {
    const Task task = parse_task(a.task);
    EvalReport report = evaluate(fs::path(a.preds), fs::path(a.gt), task, a.iou);
    report.method = a.method;
    report.dataset = a.dataset.empty() ? fs::path(a.gt).stem().string() : a.dataset;
    if (!a.out.empty()) {
        write_text(a.out, report.to_json().dump(2) + "\n");
        write_snapshot(snapshot_path_for_file(a.out), "eval", ctx.args,
                       {{"preds", a.preds}, {"gt", a.gt}, {"task", a.task}, {"iou", a.iou}, {"out", a.out},
                        {"method", report.method}, {"dataset", report.dataset}});
    }
    ctx.out << format_report(report, ReportStyle::table);
    return kExitOk;
}

// ---- segment ---------------------------------------------------------------

struct SegmentArgs {
    std::string preds;
    std::string images;
    std::string task = "hbb";
    std::string segmenter = "threshold";
    double dilation = 0.10;
    std::string out;
};

int cmd_segment(const Context& ctx, const SegmentArgs& a) {
    const auto preds = read_predictions(a.preds, parse_task(a.task));
    const auto segmenter = make_segmenter(a.segmenter, a.dilation);
    const SegmentationRunStats stats = segment_predictions(preds, a.images, *segmenter, a.out);
    for (const auto& w : stats.warnings) ctx.warn(w);
    write_snapshot(fs::path(a.out) / "config.json", "segment", ctx.args,
                   {{"preds", a.preds}, {"images", a.images}, {"task", a.task}, {"segmenter", a.segmenter},
                    {"dilation", a.dilation}, {"out", a.out}});
    ctx.out << ordered_json{{"images", stats.images},
                            {"boxes", stats.boxes},
                            {"masks_written", stats.masks_written},
                            {"failures", stats.failures},
                            {"missing_images", stats.missing_images}}
                   .dump(2)
            << '\n';
    return stats.warnings.empty() ? kExitOk : kExitWarnings;
}

// ---- report ----------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> evals;
    std::string format = "table";
    std::string out;
    double iou = 0.5;
};

int cmd_report(const Context& ctx, const ReportArgs& a) {
    std::vector<EvalReport> reports;
    for (const auto& path : a.evals) {
        try {
            reports.push_back(EvalReport::from_json(nlohmann::json::parse(read_text(path))));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::FormatError, path + ": " + e.what());
        }
    }
    reports = merge_reports(std::move(reports));
    const std::string text =
        a.format == "svg" ? render_pr_svg(reports, a.iou) : format_report(reports, parse_report_style(a.format));
    if (a.out.empty()) {
        ctx.out << text;
    } else {
        write_text(a.out, text);
        write_snapshot(snapshot_path_for_file(a.out), "report", ctx.args,
                       {{"eval", a.evals}, {"format", a.format}, {"iou", a.iou}, {"out", a.out}});
    }
    return kExitOk;
}

int cmd_replay(const Context& ctx, const std::string& snapshot) {
    const auto j = nlohmann::json::parse(read_text(snapshot));
    const auto args = j.at("argv").get<std::vector<std::string>>();
    if (args.empty() || args.front() == "replay") fail(ErrorCode::FormatError, "snapshot does not hold a replayable command");
    ctx.info("replaying: shipvl " + [&] {
        std::string s;
        for (const auto& x : args) s += (s.empty() ? "" : " ") + x;
        return s;
    }());
    std::vector<std::string> full = args;
    if (ctx.quiet) full.insert(full.begin(), "--quiet");
    return run_cli(full, ctx.out, ctx.err);
}

}  // namespace

std::optional<std::uint64_t> resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config) {
    if (flag) return flag;
    if (const char* env = std::getenv(kSeedEnvVar); env != nullptr && *env != '\0') {
        std::uint64_t v = 0;
        const char* end = env + std::char_traits<char>::length(env);
        const auto [ptr, ec] = std::from_chars(env, end, v);
        if (ec != std::errc() || ptr != end) {
            fail(ErrorCode::InvalidArgument, std::string(kSeedEnvVar) + " must be an unsigned integer, got '" + env + "'");
        }
        return v;
    }
    return config;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Ship detection vision-language toolkit: conversion, toy training, inference, evaluation, "
                 "segmentation and reporting.\nExit codes: 0 success, 1 fatal error, 2 completed with warnings.\n"
                 "Seed precedence: --seed flag, then the " +
                     std::string(kSeedEnvVar) + " environment variable, then the config file.",
                 "shipvl"};
    app.require_subcommand(1);
    bool quiet = false;
    bool version = false;
    app.add_flag("-q,--quiet", quiet, "Suppress progress and warning messages");
    app.add_flag("--version", version, "Print name and version as JSON and exit");
    app.fallthrough();

    ConvertArgs cv;
    auto* convert = app.add_subcommand("convert", "Convert DOTA or HBB-JSON annotations into instruction records");
    convert->add_option("--format", cv.format, "Annotation format: dota or hbb-json")->check(CLI::IsMember({"dota", "hbb-json"}));
    convert->add_option("--task", cv.task, "Answer geometry: hbb or obb")->check(CLI::IsMember({"hbb", "obb"}));
    convert->add_option("--images", cv.images, "Image directory")->required();
    convert->add_option("--annotations", cv.annotations, "Annotation directory")->required();
    convert->add_option("--out", cv.out, "Output JSONL file")->required();
    convert->add_flag("--strict", cv.strict, "Fail on files with malformed lines and no valid object");
    convert->add_flag("--drop-empty", cv.drop_empty, "Skip images without ships instead of emitting the empty answer");
    convert->add_flag("--augment", cv.augment, "Sample instruction paraphrases instead of the fixed sentence");
    convert->add_option("--seed", cv.seed, "Paraphrase sampling seed");
    convert->add_option("--dataset", cv.dataset, "Source dataset name (default DOTA or SSDD by format)");
    convert->add_option("--modality", cv.modality, "optical or sar (default by format)")->check(CLI::IsMember({"optical", "sar"}));
    convert->add_option("--ship-class", cv.ship_classes, "Class names treated as ships (repeatable)");

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "Render a synthetic bright-rectangle ship dataset");
    synth->add_option("--out", sy.out, "Output directory")->required();
    synth->add_option("--count", sy.count, "Number of images")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", sy.seed, "Scene seed (default 1)");
    synth->add_option("--size", sy.size, "Image side in pixels")->check(CLI::PositiveNumber);
    synth->add_option("--min-ships", sy.min_ships, "Minimum ships per image")->check(CLI::NonNegativeNumber);
    synth->add_option("--max-ships", sy.max_ships, "Maximum ships per image")->check(CLI::NonNegativeNumber);
    synth->add_option("--noise", sy.noise, "Gaussian pixel noise")->check(CLI::NonNegativeNumber);

    TrainArgs tr;
    auto* train = app.add_subcommand("train-toy", "Train the desk-scale model for one stage");
    train->add_option("--data", tr.data, "Instruction-record JSONL")->required();
    train->add_option("--images", tr.images, "Image directory (default: <data dir>/images)");
    train->add_option("--stage", tr.stage, "alignment or ship")->check(CLI::IsMember({"alignment", "ship"}));
    train->add_option("--config", tr.config, "JSON file with optional model, train and seed entries");
    train->add_option("--seed", tr.seed, "Seed for initialization and batching");
    train->add_option("--init", tr.init, "Start from this checkpoint instead of a fresh model");
    train->add_option("--out", tr.out, "Output checkpoint")->required();
    train->add_option("--loss-csv", tr.loss_csv, "Loss curve CSV (default: <out>.loss.csv)");
    train->add_option("--steps", tr.steps, "Override the configured step count")->check(CLI::NonNegativeNumber);
    train->add_option("--log-every", tr.log_every, "Progress interval in steps (0 disables)");

    InferArgs in;
    auto* infer = app.add_subcommand("infer", "Decode, parse and score detections for every image in a directory");
    infer->add_option("--model", in.model, "Checkpoint from train-toy");
    infer->add_option("--scripted", in.scripted, "Scripted-answer JSONL used instead of a model");
    infer->add_option("--images", in.images, "Image directory")->required();
    infer->add_option("--task", in.task, "hbb or obb")->check(CLI::IsMember({"hbb", "obb"}));
    infer->add_option("--scorer", in.scorer, "Confidence scorer: default or constant")->check(CLI::IsMember({"default", "constant"}));
    infer->add_option("--instruction", in.instruction, "Override the task instruction");
    infer->add_option("--out", in.out, "Prediction JSONL")->required();

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Compute AP at several IoU thresholds");
    eval->add_option("--preds", ev.preds, "Prediction JSONL")->required();
    eval->add_option("--gt", ev.gt, "Ground-truth JSONL")->required();
    eval->add_option("--task", ev.task, "hbb or obb")->check(CLI::IsMember({"hbb", "obb"}));
    eval->add_option("--iou", ev.iou, "Comma-separated IoU thresholds")->delimiter(',');
    eval->add_option("--out", ev.out, "Report JSON");
    eval->add_option("--method", ev.method, "Method name shown in reports");
    eval->add_option("--dataset", ev.dataset, "Dataset name shown in reports (default: GT file stem)");

    SegmentArgs sg;
    auto* seg = app.add_subcommand("segment", "Turn detection boxes into masks with a promptable segmenter");
    seg->add_option("--preds", sg.preds, "Prediction JSONL")->required();
    seg->add_option("--images", sg.images, "Image directory")->required();
    seg->add_option("--task", sg.task, "hbb or obb")->check(CLI::IsMember({"hbb", "obb"}));
    seg->add_option("--segmenter", sg.segmenter, "boxfill or threshold")->check(CLI::IsMember({"boxfill", "threshold"}));
    seg->add_option("--dilation", sg.dilation, "Prompt dilation as a fraction of box size")->check(CLI::NonNegativeNumber);
    seg->add_option("--out", sg.out, "Mask output directory")->required();

    ReportArgs rp;
    auto* report = app.add_subcommand("report", "Merge evaluation reports into a table or PR plot");
    report->add_option("--eval", rp.evals, "Report JSON (repeatable)")->required();
    report->add_option("--format", rp.format, "table, csv, json or svg")->check(CLI::IsMember({"table", "csv", "json", "svg"}));
    report->add_option("--out", rp.out, "Output file (default: stdout)");
    report->add_option("--iou", rp.iou, "Threshold plotted in svg output");

    std::string snapshot;
    auto* replay = app.add_subcommand("replay", "Re-run a command from its config snapshot");
    replay->add_option("snapshot", snapshot, "Snapshot JSON written next to a command's outputs")->required();

    // --version must work without a subcommand.
    if (std::find(args.begin(), args.end(), "--version") != args.end()) {
        out << ordered_json{{"name", "shipvl"}, {"version", SHIPVL_VERSION}}.dump() << '\n';
        return kExitOk;
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitFatal;
    }

    std::vector<std::string> command_args;
    for (const auto& a : args) {
        if (a != "-q" && a != "--quiet") command_args.push_back(a);
    }
    Context ctx{command_args, out, err, quiet};
    try {
        if (convert->parsed()) return cmd_convert(ctx, cv);
        if (synth->parsed()) return cmd_synth(ctx, sy);
        if (train->parsed()) return cmd_train(ctx, tr);
        if (infer->parsed()) return cmd_infer(ctx, in);
        if (eval->parsed()) return cmd_eval(ctx, ev);
        if (seg->parsed()) return cmd_segment(ctx, sg);
        if (report->parsed()) return cmd_report(ctx, rp);
        if (replay->parsed()) return cmd_replay(ctx, snapshot);
    } catch (const Error& e) {
        err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return kExitFatal;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFatal;
    }
    return kExitFatal;
}

}  // namespace shipvl
