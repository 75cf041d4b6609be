#include "shipvl/answer_codec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace shipvl {

namespace {

constexpr double kScale = 1000.0;  // 10^kAnswerDecimals

void append_number(std::string& out, double v) {
    char buf[32];
    const double q = quantize(v);
    std::snprintf(buf, sizeof buf, "%.3f", q == 0.0 ? 0.0 : q);
    out += buf;
}

template <std::size_t N>
void append_group(std::string& out, const std::array<double, N>& values) {
    out += '[';
    for (std::size_t i = 0; i < N; ++i) {
        if (i) out += ", ";
        append_number(out, values[i]);
    }
    out += ']';
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Parses "a, b, c" / "a b c" into numbers. Returns false if the content is not purely numeric.
bool parse_numbers(std::string_view content, std::vector<double>& out) {
    out.clear();
    std::size_t i = 0;
    const std::size_t n = content.size();
    bool expect_number = true;
    while (i < n) {
        while (i < n && is_space(content[i])) ++i;
        if (i >= n) break;
        if (content[i] == ',') {
            if (expect_number) return false;
            expect_number = true;
            ++i;
            continue;
        }
        std::size_t start = i;
        if (content[i] == '+') ++start;
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(content.data() + start, content.data() + n, v);
        if (ec != std::errc{} || ptr == content.data() + start) return false;
        if (!std::isfinite(v)) return false;
        out.push_back(v);
        i = static_cast<std::size_t>(ptr - content.data());
        expect_number = false;
    }
    return !out.empty() && !expect_number;
}

std::array<double, 4> hbox_values(const HBox& b) { return {b.x_min, b.y_min, b.x_max, b.y_max}; }

std::array<double, 8> obox_values(const OBox& b) {
    std::array<double, 8> v{};
    for (std::size_t i = 0; i < 4; ++i) {
        v[2 * i] = b[i].x;
        v[2 * i + 1] = b[i].y;
    }
    return v;
}

HBox quantized(const HBox& b) {
    return HBox{quantize(b.x_min), quantize(b.y_min), quantize(b.x_max), quantize(b.y_max), b.space};
}

OBox quantized(const OBox& b) {
    Quad q{};
    for (std::size_t i = 0; i < 4; ++i) q[i] = {quantize(b[i].x), quantize(b[i].y)};
    try {
        return canonicalize_quad(q, b.space());
    } catch (const Error&) {
        // Collapsed by rounding; keep the vertex order of the canonical input.
        return OBox::raw(q, b.space());
    }
}

void require_normalized(const CoordSpace& space) {
    if (!space.is_normalized()) fail(ErrorCode::SpaceMismatch, "answers carry normalized coordinates only");
}

template <typename B>
std::string render(std::vector<B> boxes) {
    if (boxes.empty()) return std::string(kEmptyAnswer);
    std::stable_sort(boxes.begin(), boxes.end(), [](const B& a, const B& b) {
        const HBox ha = bounding_hbox(Box{a});
        const HBox hb = bounding_hbox(Box{b});
        if (ha.y_min != hb.y_min) return ha.y_min < hb.y_min;
        return ha.x_min < hb.x_min;
    });
    std::string out;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (i) out += "; ";
        if constexpr (std::is_same_v<B, HBox>) {
            append_group(out, hbox_values(boxes[i]));
        } else {
            append_group(out, obox_values(boxes[i]));
        }
    }
    return out;
}

Diagnostic make_diag(Diagnostic::Kind kind, int index, std::string message) {
    return Diagnostic{kind, index, std::move(message)};
}

}  // namespace

std::string_view to_string(Task task) noexcept {
    switch (task) {
        case Task::hbb: return "hbb";
        case Task::obb: return "obb";
        case Task::caption: return "caption";
    }
    return "hbb";
}

Task parse_task(std::string_view text) {
    if (text == "hbb") return Task::hbb;
    if (text == "obb") return Task::obb;
    if (text == "caption") return Task::caption;
    fail(ErrorCode::InvalidArgument, "unknown task '" + std::string(text) + "'");
}

std::string_view to_string(Diagnostic::Kind kind) noexcept {
    using K = Diagnostic::Kind;
    switch (kind) {
        case K::clamped: return "clamped";
        case K::swapped: return "swapped";
        case K::arity_mismatch: return "arity_mismatch";
        case K::degenerate: return "degenerate";
        case K::duplicate: return "duplicate";
        case K::out_of_range: return "out_of_range";
        case K::non_canonical: return "non_canonical";
        case K::deduplicated: return "deduplicated";
    }
    return "unknown";
}

HBox bounding_hbox(const Box& box) {
    if (const auto* h = std::get_if<HBox>(&box)) return *h;
    return quad_bounding_hbox(std::get<OBox>(box));
}

double box_iou(const Box& a, const Box& b) {
    if (a.index() != b.index()) fail(ErrorCode::GeometryMismatch, "cannot compare an HBox with an OBox");
    if (const auto* ha = std::get_if<HBox>(&a)) return hbb_iou(*ha, std::get<HBox>(b));
    return quad_iou(std::get<OBox>(a), std::get<OBox>(b));
}

double quantize(double value) noexcept {
    const double q = std::round(value * kScale) / kScale;
    return q == 0.0 ? 0.0 : q;
}

std::string serialize_answer(std::span<const HBox> boxes) {
    std::vector<HBox> q;
    q.reserve(boxes.size());
    for (const auto& b : boxes) {
        require_normalized(b.space);
        q.push_back(quantized(b));
    }
    return render(std::move(q));
}

std::string serialize_answer(std::span<const OBox> boxes) {
    std::vector<OBox> q;
    q.reserve(boxes.size());
    for (const auto& b : boxes) {
        require_normalized(b.space());
        if (!b.canonical()) fail(ErrorCode::NonCanonicalBox, "OBB answers require canonical vertex order");
        q.push_back(quantized(b));
    }
    return render(std::move(q));
}

std::string serialize_answer(std::span<const Box> boxes, Task task) {
    if (task == Task::caption) fail(ErrorCode::InvalidArgument, "caption answers carry no boxes");
    if (task == Task::hbb) {
        std::vector<HBox> hs;
        for (const auto& b : boxes) {
            const auto* h = std::get_if<HBox>(&b);
            if (!h) fail(ErrorCode::GeometryMismatch, "hbb answers take HBoxes");
            hs.push_back(*h);
        }
        return serialize_answer(std::span<const HBox>(hs));
    }
    std::vector<OBox> os;
    for (const auto& b : boxes) {
        const auto* o = std::get_if<OBox>(&b);
        if (!o) fail(ErrorCode::GeometryMismatch, "obb answers take OBoxes");
        os.push_back(*o);
    }
    return serialize_answer(std::span<const OBox>(os));
}

DetectionAnswer parse_answer(std::string_view text, Task task, const ParseOptions& options) {
    DetectionAnswer answer;
    if (task == Task::caption) return answer;
    const std::size_t arity = task == Task::hbb ? 4 : 8;

    std::vector<double> values;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t open = text.find('[', pos);
        if (open == std::string_view::npos) break;
        const std::size_t close = text.find_first_of("[]", open + 1);
        if (close == std::string_view::npos) break;
        if (text[close] == '[') {  // a nested opener restarts the group
            pos = close;
            continue;
        }
        pos = close + 1;
        if (!parse_numbers(text.substr(open + 1, close - open - 1), values)) continue;

        const int index = static_cast<int>(answer.boxes.size());
        if (values.size() != arity) {
            answer.warnings.push_back(make_diag(Diagnostic::Kind::arity_mismatch, -1,
                                                "group with " + std::to_string(values.size()) + " values, expected " +
                                                    std::to_string(arity)));
            continue;
        }
        bool clamped = false;
        for (auto& v : values) {
            const double c = std::clamp(v, 0.0, 1.0);
            if (c != v) clamped = true;
            v = c;
        }
        if (clamped) {
            answer.warnings.push_back(make_diag(Diagnostic::Kind::clamped, index, "coordinates clamped into [0, 1]"));
        }

        Box box;
        if (task == Task::hbb) {
            HBox h{values[0], values[1], values[2], values[3], CoordSpace::normalized()};
            if (h.x_min > h.x_max || h.y_min > h.y_max) {
                if (h.x_min > h.x_max) std::swap(h.x_min, h.x_max);
                if (h.y_min > h.y_max) std::swap(h.y_min, h.y_max);
                answer.warnings.push_back(make_diag(Diagnostic::Kind::swapped, index, "min/max corners swapped"));
            }
            box = h;
        } else {
            Quad q{};
            for (std::size_t i = 0; i < 4; ++i) q[i] = {values[2 * i], values[2 * i + 1]};
            try {
                box = canonicalize_quad(q, CoordSpace::normalized());
            } catch (const Error& e) {
                answer.warnings.push_back(make_diag(Diagnostic::Kind::degenerate, -1, e.what()));
                continue;
            }
        }

        if (options.deduplicate) {
            bool dup = false;
            for (const auto& prev : answer.boxes) {
                if (box_iou(prev, box) > options.duplicate_iou) {
                    dup = true;
                    break;
                }
            }
            if (dup) {
                answer.warnings.push_back(make_diag(Diagnostic::Kind::deduplicated, -1, "duplicate box dropped"));
                continue;
            }
        }
        answer.boxes.push_back(box);
    }
    return answer;
}

std::vector<Diagnostic> validate_answer(const DetectionAnswer& answer, double duplicate_iou) {
    std::vector<Diagnostic> out = answer.warnings;
    for (std::size_t i = 0; i < answer.boxes.size(); ++i) {
        const int idx = static_cast<int>(i);
        const Box& b = answer.boxes[i];
        const HBox h = bounding_hbox(b);
        if (h.x_min < 0.0 || h.y_min < 0.0 || h.x_max > 1.0 || h.y_max > 1.0) {
            out.push_back(make_diag(Diagnostic::Kind::out_of_range, idx, "coordinates outside [0, 1]"));
        }
        if (const auto* hb = std::get_if<HBox>(&b)) {
            if (hb->x_min > hb->x_max || hb->y_min > hb->y_max) {
                out.push_back(make_diag(Diagnostic::Kind::swapped, idx, "min corner exceeds max corner"));
            } else if (hb->area() <= kAreaEpsilon) {
                out.push_back(make_diag(Diagnostic::Kind::degenerate, idx, "zero-area box"));
            }
        } else {
            const auto& ob = std::get<OBox>(b);
            if (ob.area() <= kAreaEpsilon) {
                out.push_back(make_diag(Diagnostic::Kind::degenerate, idx, "zero-area quad"));
            } else if (!ob.canonical()) {
                out.push_back(make_diag(Diagnostic::Kind::non_canonical, idx, "quad is not in canonical order"));
            }
        }
    }
    for (std::size_t i = 0; i < answer.boxes.size(); ++i) {
        for (std::size_t j = i + 1; j < answer.boxes.size(); ++j) {
            double iou = 0.0;
            try {
                iou = box_iou(answer.boxes[i], answer.boxes[j]);
            } catch (const Error&) {
                continue;
            }
            if (iou > duplicate_iou) {
                out.push_back(make_diag(Diagnostic::Kind::duplicate, static_cast<int>(j),
                                        "duplicates box " + std::to_string(i)));
            }
        }
    }
    return out;
}

}  // namespace shipvl
