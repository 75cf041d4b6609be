#include "shipvl/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "shipvl/labeling.hpp"

namespace shipvl {

namespace {

bool overlaps(const HBox& a, const HBox& b) {
    return a.x_min < b.x_max && b.x_min < a.x_max && a.y_min < b.y_max && b.y_min < a.y_max;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    return out;
}

nlohmann::ordered_json boxes_json(const std::vector<Box>& boxes, Task task) {
    auto arr = nlohmann::ordered_json::array();
    for (const Box& b : boxes) {
        if (task == Task::hbb) {
            const HBox& h = std::get<HBox>(b);
            arr.push_back({h.x_min, h.y_min, h.x_max, h.y_max});
        } else {
            auto flat = nlohmann::ordered_json::array();
            for (const Point& p : std::get<OBox>(b).vertices()) {
                flat.push_back(p.x);
                flat.push_back(p.y);
            }
            arr.push_back(flat);
        }
    }
    return arr;
}

}  // namespace

SyntheticScene render_scene(Rng& rng, const SceneOptions& o) {
    if (o.size <= 0 || o.grid <= 0 || o.min_extent <= 0 || o.min_extent > o.size || o.min_ships < 0 ||
        o.max_ships < o.min_ships) {
        fail(ErrorCode::InvalidArgument, "invalid scene options");
    }
    SyntheticScene scene;
    const int cells = o.size / o.grid;
    const int want = static_cast<int>(rng.uniform_int(o.min_ships, o.max_ships));
    for (int attempt = 0; static_cast<int>(scene.pixel_boxes.size()) < want && attempt < 1000; ++attempt) {
        const int x0 = static_cast<int>(rng.uniform_int(0, cells - 1)) * o.grid;
        const int x1 = static_cast<int>(rng.uniform_int(0, cells)) * o.grid;
        const int y0 = static_cast<int>(rng.uniform_int(0, cells - 1)) * o.grid;
        const int y1 = static_cast<int>(rng.uniform_int(0, cells)) * o.grid;
        if (x1 - x0 < o.min_extent || y1 - y0 < o.min_extent) continue;
        const HBox box = make_hbox(x0, y0, x1, y1, CoordSpace::pixel(o.size, o.size));
        if (std::any_of(scene.pixel_boxes.begin(), scene.pixel_boxes.end(),
                        [&](const HBox& other) { return overlaps(box, other); })) {
            continue;
        }
        scene.pixel_boxes.push_back(box);
        scene.boxes.push_back(rescale(box, CoordSpace::normalized()));
    }

    scene.image = GrayImage(o.size, o.size, o.background);
    for (const HBox& b : scene.pixel_boxes) {
        for (int y = static_cast<int>(b.y_min); y < static_cast<int>(b.y_max); ++y) {
            for (int x = static_cast<int>(b.x_min); x < static_cast<int>(b.x_max); ++x) scene.image.at(x, y) = o.foreground;
        }
    }
    for (float& p : scene.image.pixels()) {
        p = std::clamp(static_cast<float>(p + rng.normal(0.0, o.noise)), 0.0f, 1.0f);
    }
    return scene;
}

std::string describe_scene(const SyntheticScene& scene) {
    if (scene.boxes.empty()) return "an empty sea.";
    auto describe = [](const HBox& b) {
        const double cx = 0.5 * (b.x_min + b.x_max);
        const double cy = 0.5 * (b.y_min + b.y_max);
        const char* size = b.area() >= 0.09 ? "large" : "small";
        const char* row = cy < 1.0 / 3 ? "upper" : (cy < 2.0 / 3 ? "middle" : "lower");
        const char* col = cx < 1.0 / 3 ? "left" : (cx < 2.0 / 3 ? "center" : "right");
        return std::string("a ") + size + " ship in the " + row + " " + col;
    };
    std::string out;
    for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
        if (i > 0) out += i + 1 == scene.boxes.size() ? " and " : ", ";
        out += describe(scene.boxes[i]);
    }
    return out + ".";
}

std::vector<SyntheticSample> make_synthetic_samples(const SyntheticDatasetOptions& options) {
    if (options.count < 0) fail(ErrorCode::InvalidArgument, "sample count must be non-negative");
    Rng rng(options.seed);
    std::vector<SyntheticSample> out;
    out.reserve(static_cast<std::size_t>(options.count));
    for (int i = 0; i < options.count; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_%04d", options.prefix.c_str(), i);
        out.push_back({id, render_scene(rng, options.scene)});
    }
    return out;
}

std::vector<SyntheticSample> write_synthetic_dataset(const std::filesystem::path& root,
                                                     const SyntheticDatasetOptions& options) {
    namespace fs = std::filesystem;
    auto samples = make_synthetic_samples(options);
    fs::create_directories(root / "images");
    fs::create_directories(root / "labels");

    auto hbb = open_out(root / "hbb.jsonl");
    auto obb = open_out(root / "obb.jsonl");
    auto captions = open_out(root / "captions.jsonl");
    auto gt_hbb = open_out(root / "gt_hbb.jsonl");
    auto gt_obb = open_out(root / "gt_obb.jsonl");

    for (const SyntheticSample& s : samples) {
        const std::string file = s.image_id + ".pgm";
        write_pgm(s.scene.image, root / "images" / file);

        auto label = open_out(root / "labels" / (s.image_id + ".txt"));
        for (const HBox& b : s.scene.pixel_boxes) {
            char line[160];
            std::snprintf(line, sizeof line, "%g %g %g %g %g %g %g %g ship 0\n", b.x_min, b.y_min, b.x_max, b.y_min,
                          b.x_max, b.y_max, b.x_min, b.y_max);
            label << line;
        }

        SourceAnnotation ann;
        ann.image_id = s.image_id;
        ann.image_file = file;
        ann.image_size = s.scene.image.size();
        ann.source_dataset = "synthetic";
        for (const HBox& b : s.scene.pixel_boxes) {
            ann.objects.push_back({{Point{b.x_min, b.y_min}, Point{b.x_max, b.y_min}, Point{b.x_max, b.y_max},
                                    Point{b.x_min, b.y_max}},
                                   "ship",
                                   0});
        }
        const ConvertedRecord rh = convert_record(ann, Task::hbb);
        const ConvertedRecord ro = convert_record(ann, Task::obb);
        hbb << to_json(rh.record).dump() << '\n';
        obb << to_json(ro.record).dump() << '\n';

        InstructionRecord cap = rh.record;
        cap.id = "synthetic_" + s.image_id + "_caption";
        cap.task = Task::caption;
        cap.instruction = build_instruction(Task::caption);
        cap.answer = describe_scene(s.scene);
        captions << to_json(cap).dump() << '\n';

        nlohmann::ordered_json gh{{"image_id", s.image_id}, {"task", "hbb"}, {"boxes", boxes_json(rh.boxes, Task::hbb)}};
        nlohmann::ordered_json go{{"image_id", s.image_id}, {"task", "obb"}, {"boxes", boxes_json(ro.boxes, Task::obb)}};
        gt_hbb << gh.dump() << '\n';
        gt_obb << go.dump() << '\n';
    }
    return samples;
}

}  // namespace shipvl
