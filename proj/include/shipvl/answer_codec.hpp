#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "shipvl/geometry.hpp"

namespace shipvl {

enum class Task { hbb, obb, caption };

std::string_view to_string(Task task) noexcept;
Task parse_task(std::string_view text);

// Answer sentence used when no ship is present.
inline constexpr std::string_view kEmptyAnswer = "No ship is detected.";
inline constexpr int kAnswerDecimals = 3;

using Box = std::variant<HBox, OBox>;

HBox bounding_hbox(const Box& box);
double box_iou(const Box& a, const Box& b);  // throws GeometryMismatch on mixed kinds

struct Diagnostic {
    enum class Kind { clamped, swapped, arity_mismatch, degenerate, duplicate, out_of_range, non_canonical, deduplicated };

    Kind kind;
    int box_index = -1;  // -1 when not tied to a parsed box
    std::string message;
};

std::string_view to_string(Diagnostic::Kind kind) noexcept;

struct DetectionAnswer {
    std::vector<Box> boxes;  // normalized space
    std::vector<Diagnostic> warnings;
};

struct ParseOptions {
    bool deduplicate = false;         // drop boxes with IoU > duplicate_iou against an earlier one
    double duplicate_iou = 0.999;
};

// Round to the fixed answer precision.
double quantize(double value) noexcept;

// Boxes are quantized, stably sorted by (y_min, x_min) of their bounding box,
// and rendered as "[a, b, c, d]" groups joined by "; ". Throws NonCanonicalBox
// for non-canonical OBoxes and SpaceMismatch for pixel-space boxes.
std::string serialize_answer(std::span<const Box> boxes, Task task);
std::string serialize_answer(std::span<const HBox> boxes);
std::string serialize_answer(std::span<const OBox> boxes);

// Total over arbitrary text; never throws for any input string.
DetectionAnswer parse_answer(std::string_view text, Task task, const ParseOptions& options = {});

// Parser warnings plus range, degeneracy, and duplicate checks.
std::vector<Diagnostic> validate_answer(const DetectionAnswer& answer, double duplicate_iou = 0.999);

}  // namespace shipvl
