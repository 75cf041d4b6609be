#include <doctest.h>

#include <cstdlib>

#include <json.hpp>

#include "shipvl/commands.hpp"
#include "shipvl/eval.hpp"
#include "support/fixtures.hpp"

using fixture::cli;
using nlohmann::json;

namespace {

// Restores an environment variable on scope exit.
class EnvGuard {
public:
    EnvGuard(const char* name, const char* value) : name_(name) {
        if (const char* old = std::getenv(name)) old_ = old;
        if (value) {
            ::setenv(name, value, 1);
        } else {
            ::unsetenv(name);
        }
    }
    ~EnvGuard() {
        if (old_) {
            ::setenv(name_, old_->c_str(), 1);
        } else {
            ::unsetenv(name_);
        }
    }

private:
    const char* name_;
    std::optional<std::string> old_;
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("version is machine readable") {
    const auto r = cli({"--version"});
    CHECK(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["name"] == "shipvl");
    CHECK(j["version"].is_string());
}

TEST_CASE("help lists the subcommands and bad flags are fatal") {
    const auto h = cli({"--help"});
    CHECK(h.code == 0);
    for (const char* sub : {"convert", "synth", "train-toy", "infer", "eval", "segment", "report", "replay"}) {
        CHECK(h.out.find(sub) != std::string::npos);
    }
    CHECK(cli({"eval", "--no-such-flag"}).code == 1);
    CHECK(cli({}).code == 1);
}

TEST_CASE("seed precedence is flag, then environment, then config") {
    EnvGuard env(shipvl::kSeedEnvVar, "17");
    CHECK(shipvl::resolve_seed(5, 9) == 5u);
    CHECK(shipvl::resolve_seed(std::nullopt, 9) == 17u);
    {
        EnvGuard unset(shipvl::kSeedEnvVar, nullptr);
        CHECK(shipvl::resolve_seed(std::nullopt, 9) == 9u);
        CHECK_FALSE(shipvl::resolve_seed(std::nullopt, std::nullopt).has_value());
    }
    EnvGuard bad(shipvl::kSeedEnvVar, "abc");
    CHECK_THROWS_AS(shipvl::resolve_seed(std::nullopt, 1), shipvl::Error);
}

TEST_CASE("synth, convert, scripted infer, eval, segment and report compose") {
    EnvGuard env(shipvl::kSeedEnvVar, nullptr);
    fixture::TempDir dir;
    const std::string root = dir.path().string();
    REQUIRE(cli({"-q", "synth", "--out", root + "/data", "--count", "4"}).code == 0);

    const auto conv = cli({"-q", "convert", "--images", root + "/data/images", "--annotations", root + "/data/labels",
                           "--out", root + "/hbb.jsonl"});
    CHECK(conv.code == 0);
    CHECK(json::parse(conv.out)["records_emitted"] == 4);
    CHECK(std::filesystem::exists(root + "/hbb.jsonl.config.json"));

    // Script the ground-truth answers, so inference must reproduce them exactly.
    std::string script;
    for (const auto& line : fixture::read_lines(root + "/hbb.jsonl")) {
        const auto rec = json::parse(line);
        script += json{{"image", rec["image"]}, {"instruction", rec["instruction"]}, {"answer", rec["answer"]}}.dump() + "\n";
    }
    fixture::write_text(dir / "script.jsonl", script);
    const auto inf = cli({"-q", "infer", "--scripted", root + "/script.jsonl", "--images", root + "/data/images", "--out",
                          root + "/preds.jsonl"});
    CHECK(inf.code == 0);
    const auto preds = fixture::read_lines(root + "/preds.jsonl");
    CHECK(preds.size() == 4);
    for (const auto& p : preds) {
        const auto j = json::parse(p);
        CHECK(j.contains("image_id"));
        CHECK(j["box"].size() == 4);
        CHECK(j["confidence"].get<double>() >= 0.0);
    }

    const auto ev = cli({"eval", "--preds", root + "/preds.jsonl", "--gt", root + "/data/gt_hbb.jsonl", "--out",
                         root + "/report.json"});
    CHECK(ev.code == 0);
    CHECK(ev.out.find("100.00  100.00  100.00") != std::string::npos);
    const auto rep = json::parse(fixture::read_text(root + "/report.json"));
    CHECK(rep["results"].size() == 3);

    const auto seg = cli({"-q", "segment", "--preds", root + "/preds.jsonl", "--images", root + "/data/images",
                          "--segmenter", "boxfill", "--out", root + "/masks"});
    CHECK(seg.code == 0);
    CHECK(fixture::read_lines(root + "/masks/manifest.jsonl").size() == 4);

    const auto rp = cli({"report", "--eval", root + "/report.json", "--eval", root + "/report.json", "--format", "csv"});
    CHECK(rp.code == 0);
    CHECK(std::count(rp.out.begin(), rp.out.end(), '\n') == 3);
    const auto svg = cli({"report", "--eval", root + "/report.json", "--format", "svg", "--out", root + "/pr.svg"});
    CHECK(svg.code == 0);
    CHECK(fixture::read_text(root + "/pr.svg").find("<svg") != std::string::npos);
}

TEST_CASE("unparseable generations become warnings and zero boxes") {
    fixture::TempDir dir;
    const std::string root = dir.path().string();
    REQUIRE(cli({"-q", "synth", "--out", root + "/data", "--count", "2"}).code == 0);
    fixture::write_text(dir / "script.jsonl", "{\"instruction\": \"Please detect all ships using the horizontal bounding box.\", "
                                              "\"answer\": \"I see some water.\"}\n");
    const auto inf = cli({"infer", "--scripted", root + "/script.jsonl", "--images", root + "/data/images", "--out",
                          root + "/preds.jsonl"});
    CHECK(inf.code == 2);
    CHECK(json::parse(inf.out)["warnings"].get<int>() >= 2);
    CHECK(fixture::read_lines(root + "/preds.jsonl").empty());
}

TEST_CASE("schema errors in eval are fatal with a line number") {
    fixture::TempDir dir;
    fixture::write_text(dir / "p.jsonl", "{\"image_id\": \"a\"}\n");
    fixture::write_text(dir / "g.jsonl", "{\"image_id\": \"a\", \"task\": \"hbb\", \"boxes\": []}\n");
    const auto r = cli({"eval", "--preds", (dir / "p.jsonl").string(), "--gt", (dir / "g.jsonl").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find(":1:") != std::string::npos);
}

TEST_CASE("empty annotation directory is fatal") {
    fixture::TempDir dir;
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "labels");
    const auto r = cli({"convert", "--images", (dir / "images").string(), "--annotations", (dir / "labels").string(),
                        "--out", (dir / "o.jsonl").string()});
    CHECK(r.code == 1);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("mixed-task reports cannot be merged") {
    fixture::TempDir dir;
    shipvl::EvalReport a, b;
    b.task = shipvl::Task::obb;
    fixture::write_text(dir / "a.json", a.to_json().dump());
    fixture::write_text(dir / "b.json", b.to_json().dump());
    CHECK(cli({"report", "--eval", (dir / "a.json").string(), "--eval", (dir / "b.json").string()}).code == 1);
}

TEST_CASE("train-toy writes a checkpoint, loss curve and replayable snapshot") {
    EnvGuard env(shipvl::kSeedEnvVar, "3");
    fixture::TempDir dir;
    const std::string root = dir.path().string();
    REQUIRE(cli({"-q", "synth", "--out", root + "/data", "--count", "2", "--size", "16"}).code == 0);
    fixture::write_text(dir / "cfg.json", R"({"model": {"model_dim": 16, "heads": 2, "total_layers": 2, "lora_layers": 1,
        "encoder_channels": 4, "image_size": 16, "patch": 4, "max_seq": 128}, "train": {"steps": 3}})");
    const auto t1 = cli({"-q", "train-toy", "--data", root + "/data/hbb.jsonl", "--config", root + "/cfg.json", "--out",
                         root + "/a.ckpt"});
    REQUIRE(t1.code == 0);
    CHECK(fixture::read_lines(root + "/a.ckpt.loss.csv").size() == 4);
    const auto snap = json::parse(fixture::read_text(root + "/a.ckpt.config.json"));
    CHECK(snap["resolved"]["seed"] == 3);

    const auto t2 = cli({"-q", "train-toy", "--data", root + "/data/hbb.jsonl", "--stage", "ship", "--init",
                         root + "/a.ckpt", "--out", root + "/b.ckpt", "--steps", "2"});
    REQUIRE(t2.code == 0);
    CHECK(json::parse(t2.out)["trainable_parameters"].get<int>() > json::parse(t1.out)["trainable_parameters"].get<int>());

    const auto first = fixture::file_hash(root + "/a.ckpt");
    EnvGuard other(shipvl::kSeedEnvVar, "99");
    CHECK(cli({"-q", "replay", root + "/a.ckpt.config.json"}).code == 0);
    CHECK(fixture::file_hash(root + "/a.ckpt") == first);
}

}  // TEST_SUITE
