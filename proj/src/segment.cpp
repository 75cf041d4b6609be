#include "shipvl/segment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "shipvl/error.hpp"

namespace shipvl {

std::size_t MaskImage::count() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }

PromptSet boxes_to_prompts(std::span<const Box> detections, ImageSize image_size) {
    if (image_size.width <= 0 || image_size.height <= 0) fail(ErrorCode::InvalidArgument, "image size must be positive");
    PromptSet out;
    out.image_size = image_size;
    const double w = image_size.width;
    const double h = image_size.height;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const HBox n = bounding_hbox(detections[i]);
        HBox p{n.x_min * w, n.y_min * h, n.x_max * w, n.y_max * h, CoordSpace::pixel(image_size.width, image_size.height)};
        const HBox c{std::clamp(p.x_min, 0.0, w), std::clamp(p.y_min, 0.0, h), std::clamp(p.x_max, 0.0, w),
                     std::clamp(p.y_max, 0.0, h), p.space};
        if (c.x_min != p.x_min || c.y_min != p.y_min || c.x_max != p.x_max || c.y_max != p.y_max) {
            out.warnings.push_back("prompt " + std::to_string(i) + " clamped to the image bounds");
        }
        out.boxes.push_back(c);
    }
    return out;
}

MaskImage box_mask(ImageSize size, const HBox& b) {
    MaskImage m(size.width, size.height);
    // Pixel x is inside when its center x + 0.5 lies in [x_min, x_max).
    const int x0 = std::max(0, static_cast<int>(std::ceil(b.x_min - 0.5)));
    const int x1 = std::min(size.width, static_cast<int>(std::ceil(b.x_max - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(b.y_min - 0.5)));
    const int y1 = std::min(size.height, static_cast<int>(std::ceil(b.y_max - 0.5)));
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) m.at(x, y) = 1;
    }
    return m;
}

HBox dilate_box(const HBox& b, double margin, ImageSize size) {
    const double mx = margin * b.width();
    const double my = margin * b.height();
    return {std::max(0.0, b.x_min - mx), std::max(0.0, b.y_min - my), std::min<double>(size.width, b.x_max + mx),
            std::min<double>(size.height, b.y_max + my), b.space};
}

MaskImage BoxFillSegmenter::segment_box(const GrayImage& image, const HBox& pixel_box) const {
    return box_mask(image.size(), pixel_box);
}

std::optional<double> otsu_threshold(std::span<const float> values) {
    if (values.empty()) return std::nullopt;
    std::array<double, 256> hist{};
    for (float v : values) hist[static_cast<std::size_t>(std::clamp(std::lround(v * 255.0f), 0L, 255L))] += 1.0;
    const double total = static_cast<double>(values.size());
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += i * hist[i];
    double w0 = 0.0;
    double sum0 = 0.0;
    double best = -1.0;
    int best_t = -1;
    for (int t = 0; t < 255; ++t) {
        w0 += hist[t];
        sum0 += t * hist[t];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }
    if (best_t < 0) return std::nullopt;
    // Values strictly above the returned level are foreground.
    return (best_t + 0.5) / 255.0;
}

MaskImage ThresholdSegmenter::segment_box(const GrayImage& image, const HBox& pixel_box) const {
    const HBox region = dilate_box(pixel_box, dilation_, image.size());
    const MaskImage inside = box_mask(image.size(), region);
    std::vector<float> values;
    int x0 = image.width(), y0 = image.height(), x1 = 0, y1 = 0;
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            if (!inside.at(x, y)) continue;
            values.push_back(image.at(x, y));
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x + 1);
            y1 = std::max(y1, y + 1);
        }
    }
    const auto t = otsu_threshold(values);
    if (!t) fail(ErrorCode::SegmenterFailure, "prompt region is empty or has constant intensity");

    MaskImage fg(image.width(), image.height());
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) fg.at(x, y) = inside.at(x, y) && image.at(x, y) > *t ? 1 : 0;
    }

    // Largest 4-connected component; the first one in raster order wins ties.
    MaskImage best(image.width(), image.height());
    std::vector<int> label(fg.data.size(), 0);
    std::vector<std::pair<int, int>> stack;
    std::vector<std::size_t> component;
    std::size_t best_size = 0;
    int next = 0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * image.width() + x;
            if (!fg.data[idx] || label[idx]) continue;
            ++next;
            component.clear();
            stack.assign(1, {x, y});
            label[idx] = next;
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                component.push_back(static_cast<std::size_t>(cy) * image.width() + cx);
                const int nx[] = {cx - 1, cx + 1, cx, cx};
                const int ny[] = {cy, cy, cy - 1, cy + 1};
                for (int k = 0; k < 4; ++k) {
                    if (nx[k] < x0 || nx[k] >= x1 || ny[k] < y0 || ny[k] >= y1) continue;
                    const std::size_t n = static_cast<std::size_t>(ny[k]) * image.width() + nx[k];
                    if (fg.data[n] && !label[n]) {
                        label[n] = next;
                        stack.push_back({nx[k], ny[k]});
                    }
                }
            }
            if (component.size() > best_size) {
                best_size = component.size();
                std::fill(best.data.begin(), best.data.end(), 0);
                for (std::size_t p : component) best.data[p] = 1;
            }
        }
    }
    if (best_size == 0) fail(ErrorCode::SegmenterFailure, "no foreground above the threshold");
    return best;
}

std::unique_ptr<Segmenter> make_segmenter(const std::string& name, double dilation) {
    if (name == "boxfill") return std::make_unique<BoxFillSegmenter>();
    if (name == "threshold") return std::make_unique<ThresholdSegmenter>(dilation);
    fail(ErrorCode::UnknownFormat, "unknown segmenter '" + name + "'");
}

SegmentResult segment(const GrayImage& image, const PromptSet& prompts, const Segmenter& segmenter) {
    SegmentResult out;
    for (std::size_t i = 0; i < prompts.boxes.size(); ++i) {
        try {
            out.masks.push_back(segmenter.segment_box(image, prompts.boxes[i]));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SegmenterFailure) throw;
            out.masks.emplace_back(image.width(), image.height());
            out.warnings.push_back("box " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::string encode_mask(const MaskImage& mask) {
    std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
    out.reserve(out.size() + mask.data.size());
    for (std::uint8_t v : mask.data) out.push_back(v ? static_cast<char>(255) : '\0');
    return out;
}

MaskImage decode_mask(const std::string& bytes) {
    std::size_t pos = 0;
    auto token = [&]() -> std::string {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    if (token() != "P5") fail(ErrorCode::FormatError, "mask is not a binary PGM (P5)");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        fail(ErrorCode::FormatError, "malformed PGM header");
    }
    if (w <= 0 || h <= 0 || maxval != 255) fail(ErrorCode::FormatError, "mask header must have positive size and maxval 255");
    ++pos;  // single whitespace byte before the raster
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (pos > bytes.size() || bytes.size() - pos != n) fail(ErrorCode::FormatError, "mask raster has the wrong length");
    MaskImage m(w, h);
    for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<unsigned char>(bytes[pos + i]);
        if (v != 0 && v != 255) fail(ErrorCode::FormatError, "mask values must be 0 or 255");
        m.data[i] = v ? 1 : 0;
    }
    return m;
}

void write_mask(const MaskImage& mask, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write mask " + path.string());
    const std::string bytes = encode_mask(mask);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "failed writing mask " + path.string());
}

MaskImage read_mask(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open mask " + path.string());
    return decode_mask(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

MaskMetrics mask_metrics(const MaskImage& predicted, const MaskImage& reference) {
    if (predicted.width != reference.width || predicted.height != reference.height) {
        fail(ErrorCode::DimensionMismatch, "mask sizes differ");
    }
    std::size_t inter = 0, uni = 0, agree = 0;
    for (std::size_t i = 0; i < predicted.data.size(); ++i) {
        const bool a = predicted.data[i] != 0;
        const bool b = reference.data[i] != 0;
        inter += a && b;
        uni += a || b;
        agree += a == b;
    }
    MaskMetrics m;
    m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    m.pixel_accuracy = predicted.data.empty() ? 1.0 : static_cast<double>(agree) / static_cast<double>(predicted.data.size());
    return m;
}

SegmentationRunStats segment_predictions(std::span<const Detection> predictions, const std::filesystem::path& images_dir,
                                         const Segmenter& segmenter, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    std::map<std::string, std::vector<Box>> by_image;
    for (const Detection& d : predictions) by_image[d.image_id].push_back(d.box);

    fs::create_directories(out_dir);
    std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::binary | std::ios::trunc);
    if (!manifest) fail(ErrorCode::IoError, "cannot write " + (out_dir / "manifest.jsonl").string());

    SegmentationRunStats stats;
    for (const auto& [image_id, boxes] : by_image) {
        ++stats.images;
        stats.boxes += boxes.size();
        const auto path = find_image(images_dir, image_id);
        if (!path) {
            ++stats.missing_images;
            stats.warnings.push_back(image_id + ": image not found");
            continue;
        }
        GrayImage image;
        try {
            image = read_image(*path);
        } catch (const Error& e) {
            ++stats.missing_images;
            stats.warnings.push_back(image_id + ": " + e.what());
            continue;
        }
        const PromptSet prompts = boxes_to_prompts(boxes, image.size());
        for (const auto& w : prompts.warnings) stats.warnings.push_back(image_id + ": " + w);
        const SegmentResult result = segment(image, prompts, segmenter);
        stats.failures += result.warnings.size();
        for (const auto& w : result.warnings) stats.warnings.push_back(image_id + ": " + w);

        fs::create_directories(out_dir / image_id);
        for (std::size_t i = 0; i < result.masks.size(); ++i) {
            const std::string rel = image_id + "/" + std::to_string(i) + ".pgm";
            write_mask(result.masks[i], out_dir / rel);
            ++stats.masks_written;
            const HBox& b = prompts.boxes[i];
            nlohmann::ordered_json line;
            line["image_id"] = image_id;
            line["box_index"] = i;
            line["prompt"] = {b.x_min, b.y_min, b.x_max, b.y_max};
            line["mask"] = rel;
            line["pixels"] = result.masks[i].count();
            line["segmenter"] = segmenter.name();
            manifest << line.dump() << '\n';
        }
    }
    return stats;
}

}  // namespace shipvl
