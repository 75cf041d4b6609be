#include "shipvl/labeling.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace shipvl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

bool to_double(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

bool to_int(std::string_view s, int& out) {
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

bool within_image(const Quad& q, ImageSize size) {
    const double tx = kBoundsEpsilon * size.width;
    const double ty = kBoundsEpsilon * size.height;
    return std::all_of(q.begin(), q.end(), [&](const Point& p) {
        return p.x >= -tx && p.y >= -ty && p.x <= size.width + tx && p.y <= size.height + ty;
    });
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string default_source(AnnotationFormat f) {
    return f == AnnotationFormat::dota ? "DOTA" : "SSDD";
}

Modality default_modality(AnnotationFormat f) {
    return f == AnnotationFormat::dota ? Modality::optical : Modality::sar;
}

}  // namespace

std::string_view to_string(Modality modality) noexcept {
    return modality == Modality::sar ? "sar" : "optical";
}

Modality parse_modality(std::string_view text) {
    const std::string t = lower(text);
    if (t == "optical") return Modality::optical;
    if (t == "sar") return Modality::sar;
    fail(ErrorCode::InvalidArgument, "unknown modality '" + std::string(text) + "'");
}

ordered_json to_json(const InstructionRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["image"] = r.image;
    j["instruction"] = r.instruction;
    j["answer"] = r.answer;
    j["task"] = std::string(to_string(r.task));
    j["source_dataset"] = r.source_dataset;
    j["modality"] = std::string(to_string(r.modality));
    return j;
}

InstructionRecord record_from_json(const json& j) {
    try {
        InstructionRecord r;
        r.id = j.at("id").get<std::string>();
        r.image = j.at("image").get<std::string>();
        r.instruction = j.at("instruction").get<std::string>();
        r.answer = j.at("answer").get<std::string>();
        r.task = parse_task(j.at("task").get<std::string>());
        r.source_dataset = j.value("source_dataset", std::string{});
        r.modality = parse_modality(j.value("modality", std::string{"optical"}));
        return r;
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("instruction record: ") + e.what());
    }
}

std::vector<InstructionRecord> read_records(const fs::path& jsonl) {
    std::ifstream in(jsonl);
    if (!in) fail(ErrorCode::IoError, "cannot read " + jsonl.string());
    std::vector<InstructionRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            fail(ErrorCode::FormatError, jsonl.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

ParsedAnnotation parse_dota_annotation(std::string_view text, ImageSize image_size, const DotaOptions& options) {
    ParsedAnnotation parsed;
    parsed.annotation.image_size = image_size;

    std::vector<std::string> classes;
    for (const auto& c : options.ship_classes) classes.push_back(lower(c));

    int line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        const auto tokens = split_ws(line);
        if (tokens.empty()) continue;
        if (line.rfind("imagesource:", 0) == 0 || line.rfind("gsd:", 0) == 0) continue;

        if (tokens.size() != 9 && tokens.size() != 10) {
            parsed.malformed.push_back({line_no, "expected 8 coordinates, a class and a difficulty; got " +
                                                     std::to_string(tokens.size()) + " fields"});
            continue;
        }
        SourceObject obj;
        bool ok = true;
        for (std::size_t i = 0; i < 4 && ok; ++i) {
            ok = to_double(tokens[2 * i], obj.quad[i].x) && to_double(tokens[2 * i + 1], obj.quad[i].y);
        }
        if (!ok) {
            parsed.malformed.push_back({line_no, "non-numeric coordinate"});
            continue;
        }
        obj.class_name = std::string(tokens[8]);
        if (tokens.size() == 10 && !to_int(tokens[9], obj.difficulty)) {
            parsed.malformed.push_back({line_no, "non-integer difficulty"});
            continue;
        }
        if (std::find(classes.begin(), classes.end(), lower(obj.class_name)) == classes.end()) {
            ++parsed.filtered;
            continue;
        }
        parsed.annotation.objects.push_back(std::move(obj));
    }

    if (options.strict && parsed.annotation.objects.empty() && !parsed.malformed.empty()) {
        fail(ErrorCode::MalformedLine, "line " + std::to_string(parsed.malformed.front().line_no) + ": " +
                                           parsed.malformed.front().reason + " (no valid objects, strict mode)");
    }
    return parsed;
}

ParsedAnnotation parse_hbb_json_annotation(std::string_view text, ImageSize image_size) {
    ParsedAnnotation parsed;
    parsed.annotation.image_size = image_size;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("hbb-json annotation: ") + e.what());
    }
    if (doc.is_object() && doc.contains("objects")) doc = doc["objects"];
    if (!doc.is_array()) fail(ErrorCode::FormatError, "hbb-json annotation must be a list of {bbox: [x, y, w, h]}");

    int index = 0;
    for (const auto& entry : doc) {
        ++index;
        const json* bbox = entry.is_object() && entry.contains("bbox") ? &entry["bbox"] : nullptr;
        if (!bbox || !bbox->is_array() || bbox->size() != 4 ||
            !std::all_of(bbox->begin(), bbox->end(), [](const json& v) { return v.is_number(); })) {
            parsed.malformed.push_back({index, "entry needs a numeric bbox [x, y, w, h]"});
            continue;
        }
        const double x = (*bbox)[0].get<double>();
        const double y = (*bbox)[1].get<double>();
        const double w = (*bbox)[2].get<double>();
        const double h = (*bbox)[3].get<double>();
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h) || w < 0 || h < 0) {
            parsed.malformed.push_back({index, "bbox has a negative or non-finite extent"});
            continue;
        }
        SourceObject obj;
        obj.quad = {{{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}}};
        obj.class_name = entry.value("category", std::string{"ship"});
        parsed.annotation.objects.push_back(std::move(obj));
    }
    return parsed;
}

const std::vector<std::string>& instruction_paraphrases(Task task) {
    static const std::vector<std::string> hbb{
        "Please detect all ships using the horizontal bounding box.",
        "Locate every ship in the image with horizontal bounding boxes.",
        "Find all ships and give their horizontal bounding boxes.",
        "Detect the ships in this image using horizontal boxes.",
    };
    static const std::vector<std::string> obb{
        "Please detect all ships using the oriented bounding box.",
        "Locate every ship in the image with oriented bounding boxes.",
        "Find all ships and give their oriented bounding boxes.",
        "Detect the ships in this image using rotated boxes.",
    };
    static const std::vector<std::string> caption{
        "Describe the image.",
        "Briefly describe this image.",
        "What does this image show?",
    };
    switch (task) {
        case Task::hbb: return hbb;
        case Task::obb: return obb;
        case Task::caption: return caption;
    }
    return hbb;
}

std::string build_instruction(Task task, const InstructionOptions& options) {
    const auto& set = instruction_paraphrases(task);
    if (!options.augment) return set.front();
    Rng rng(options.seed);
    return set[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(set.size()) - 1))];
}

ConvertedRecord convert_record(const SourceAnnotation& ann, Task task, const InstructionOptions& instruction) {
    if (task == Task::caption) fail(ErrorCode::InvalidArgument, "caption records are not synthesized from boxes");
    const CoordSpace pixels = CoordSpace::pixel(ann.image_size.width, ann.image_size.height);
    const CoordSpace unit = CoordSpace::normalized();

    ConvertedRecord out;
    for (std::size_t i = 0; i < ann.objects.size(); ++i) {
        const auto& obj = ann.objects[i];
        if (!within_image(obj.quad, ann.image_size)) {
            out.dropped.push_back({i, "out_of_bounds"});
            continue;
        }
        try {
            const OBox quad = canonicalize_quad(obj.quad, pixels);
            if (task == Task::hbb) {
                out.boxes.emplace_back(rescale(quad_bounding_hbox(quad), unit));
            } else {
                out.boxes.emplace_back(rescale(quad, unit));
            }
        } catch (const Error& e) {
            std::string reason = "invalid";
            if (e.code() == ErrorCode::DegenerateQuad) reason = "degenerate";
            if (e.code() == ErrorCode::SelfIntersecting) reason = "self_intersecting";
            if (e.code() == ErrorCode::OutOfBounds) reason = "out_of_bounds";
            out.dropped.push_back({i, reason});
        }
    }

    auto& r = out.record;
    r.answer = serialize_answer(out.boxes, task);
    // Keep the returned boxes in the same order the answer lists them.
    out.boxes = parse_answer(r.answer, task).boxes;

    r.id = lower(ann.source_dataset) + "_" + ann.image_id + "_" + std::string(to_string(task));
    r.image = ann.image_file.empty() ? ann.image_id : ann.image_file;
    InstructionOptions io = instruction;
    if (io.augment) io.seed ^= fnv1a(r.id);
    r.instruction = build_instruction(task, io);
    r.task = task;
    r.source_dataset = ann.source_dataset;
    r.modality = ann.modality;
    return out;
}

std::string_view to_string(AnnotationFormat format) noexcept {
    return format == AnnotationFormat::dota ? "dota" : "hbb-json";
}

AnnotationFormat parse_annotation_format(std::string_view text) {
    const std::string t = lower(text);
    if (t == "dota") return AnnotationFormat::dota;
    if (t == "hbb-json" || t == "hbb_json") return AnnotationFormat::hbb_json;
    fail(ErrorCode::UnknownFormat, "unknown annotation format '" + std::string(text) + "'");
}

ordered_json ConversionStats::to_json() const {
    ordered_json j;
    j["inputs"] = inputs;
    j["records_emitted"] = records_emitted;
    j["objects_emitted"] = objects_emitted;
    j["objects_dropped"] = objects_dropped;
    j["objects_filtered"] = objects_filtered;
    j["malformed_lines"] = malformed_lines;
    j["images_skipped"] = images_skipped;
    ordered_json r = ordered_json::object();
    for (const auto& [k, v] : reasons) r[k] = v;
    j["reasons"] = r;
    return j;
}

ConversionStats convert_dataset(const ConvertOptions& options) {
    std::error_code ec;
    if (!fs::is_directory(options.annotations_dir, ec)) {
        fail(ErrorCode::IoError, "annotation directory not readable: " + options.annotations_dir.string());
    }
    if (!fs::is_directory(options.images_dir, ec)) {
        fail(ErrorCode::IoError, "image directory not readable: " + options.images_dir.string());
    }

    const std::string ext = options.format == AnnotationFormat::dota ? ".txt" : ".json";
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(options.annotations_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) files.push_back(entry.path());
    }
    if (files.empty()) {
        fail(ErrorCode::IoError, "no " + ext + " annotation files in " + options.annotations_dir.string());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.stem().string() < b.stem().string(); });

    std::ofstream out(options.output, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + options.output.string());

    const std::string source = options.source_dataset.value_or(default_source(options.format));
    const Modality modality = options.modality.value_or(default_modality(options.format));

    ConversionStats stats;
    auto skip = [&](const std::string& reason) {
        ++stats.images_skipped;
        ++stats.reasons["skipped_" + reason];
    };

    for (const auto& file : files) {
        ++stats.inputs;
        const std::string image_id = file.stem().string();
        const auto image_path = find_image(options.images_dir, image_id);
        if (!image_path) {
            skip("missing_image");
            continue;
        }
        const auto size = sniff_image_size(*image_path);
        if (!size) {
            skip("unreadable_image");
            continue;
        }

        ParsedAnnotation parsed;
        try {
            const std::string text = read_text(file);
            if (options.format == AnnotationFormat::dota) {
                parsed = parse_dota_annotation(text, *size, DotaOptions{options.strict, options.ship_classes});
            } else {
                parsed = parse_hbb_json_annotation(text, *size);
            }
        } catch (const Error&) {
            skip("malformed");
            continue;
        }
        stats.malformed_lines += parsed.malformed.size();
        stats.objects_filtered += parsed.filtered;
        if (!parsed.malformed.empty()) stats.reasons["malformed_line"] += parsed.malformed.size();
        if (parsed.filtered) stats.reasons["non_ship_class"] += parsed.filtered;

        auto& ann = parsed.annotation;
        ann.image_id = image_id;
        ann.image_file = fs::relative(*image_path, options.images_dir).generic_string();
        ann.modality = modality;
        ann.source_dataset = source;

        const ConvertedRecord converted = convert_record(ann, options.task, options.instruction);
        stats.objects_dropped += converted.dropped.size();
        for (const auto& d : converted.dropped) ++stats.reasons["dropped_" + d.reason];
        if (converted.boxes.empty() && !options.keep_empty) {
            skip("empty");
            continue;
        }
        stats.objects_emitted += converted.boxes.size();
        out << to_json(converted.record).dump(-1, ' ', false) << '\n';
        ++stats.records_emitted;
    }
    out.flush();
    if (!out) fail(ErrorCode::IoError, "short write to " + options.output.string());
    return stats;
}

}  // namespace shipvl
