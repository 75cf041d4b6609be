#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "shipvl/answer_codec.hpp"
#include "shipvl/geometry.hpp"
#include "shipvl/image.hpp"
#include "shipvl/rng.hpp"

namespace shipvl {

enum class Modality { optical, sar };

std::string_view to_string(Modality modality) noexcept;
Modality parse_modality(std::string_view text);

struct SourceObject {
    Quad quad{};  // pixel coordinates
    std::string class_name;
    int difficulty = 0;
};

struct SourceAnnotation {
    std::string image_id;
    std::string image_file;  // relative to the image directory
    ImageSize image_size;
    std::vector<SourceObject> objects;
    Modality modality = Modality::optical;
    std::string source_dataset;
};

// One image-instruction-answer triple; serialized with exactly these keys, in this order.
struct InstructionRecord {
    std::string id;
    std::string image;
    std::string instruction;
    std::string answer;
    Task task = Task::hbb;
    std::string source_dataset;
    Modality modality = Modality::optical;

    friend bool operator==(const InstructionRecord&, const InstructionRecord&) = default;
};

nlohmann::ordered_json to_json(const InstructionRecord& record);
InstructionRecord record_from_json(const nlohmann::json& j);
std::vector<InstructionRecord> read_records(const std::filesystem::path& jsonl);

struct MalformedLine {
    int line_no = 0;  // 1-based; entry index for JSON sources
    std::string reason;
};

struct ParsedAnnotation {
    SourceAnnotation annotation;
    std::vector<MalformedLine> malformed;
    std::size_t filtered = 0;  // valid objects of non-ship classes
};

struct DotaOptions {
    bool strict = false;                         // zero valid objects plus malformed lines is fatal
    std::vector<std::string> ship_classes{"ship"};  // compared case-insensitively
};

// DOTA text: optional "imagesource:"/"gsd:" headers, then
// "x1 y1 x2 y2 x3 y3 x4 y4 class [difficulty]" per object.
ParsedAnnotation parse_dota_annotation(std::string_view text, ImageSize image_size, const DotaOptions& options = {});

// JSON list of {"bbox": [x, y, w, h]} entries (SSDD/HRSID-style horizontal boxes, all ships).
ParsedAnnotation parse_hbb_json_annotation(std::string_view text, ImageSize image_size);

struct InstructionOptions {
    bool augment = false;  // sample from the paraphrase set instead of the fixed sentence
    std::uint64_t seed = 0;
};

std::string build_instruction(Task task, const InstructionOptions& options = {});
const std::vector<std::string>& instruction_paraphrases(Task task);

struct DroppedObject {
    std::size_t object_index = 0;
    std::string reason;  // "degenerate", "self_intersecting", "out_of_bounds"
};

struct ConvertedRecord {
    InstructionRecord record;
    std::vector<Box> boxes;  // normalized boxes encoded in the answer, in answer order
    std::vector<DroppedObject> dropped;
};

ConvertedRecord convert_record(const SourceAnnotation& annotation, Task task,
                               const InstructionOptions& instruction = {});

enum class AnnotationFormat { dota, hbb_json };

std::string_view to_string(AnnotationFormat format) noexcept;
AnnotationFormat parse_annotation_format(std::string_view text);  // throws UnknownFormat

struct ConvertOptions {
    std::filesystem::path images_dir;
    std::filesystem::path annotations_dir;
    AnnotationFormat format = AnnotationFormat::dota;
    Task task = Task::hbb;
    std::filesystem::path output;
    bool keep_empty = true;
    bool strict = false;
    std::optional<std::string> source_dataset;  // defaults per format
    std::optional<Modality> modality;           // defaults per format
    std::vector<std::string> ship_classes{"ship"};
    InstructionOptions instruction;
};

struct ConversionStats {
    std::size_t inputs = 0;
    std::size_t records_emitted = 0;
    std::size_t objects_emitted = 0;
    std::size_t objects_dropped = 0;
    std::size_t objects_filtered = 0;
    std::size_t malformed_lines = 0;
    std::size_t images_skipped = 0;
    std::map<std::string, std::size_t> reasons;

    nlohmann::ordered_json to_json() const;
};

// Streams records to a JSONL file in lexicographic image_id order.
ConversionStats convert_dataset(const ConvertOptions& options);

}  // namespace shipvl
