#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shipvl/answer_codec.hpp"
#include "shipvl/eval.hpp"
#include "shipvl/image.hpp"

namespace shipvl {

struct PromptSet {
    ImageSize image_size;
    std::vector<HBox> boxes;  // pixel space
    std::vector<std::string> warnings;
};

// Denormalizes to pixels (OBBs via their bounding box) and clamps to the image, warning on each clamp.
PromptSet boxes_to_prompts(std::span<const Box> detections, ImageSize image_size);

struct MaskImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // row-major, 0 = background, 1 = ship

    MaskImage() = default;
    MaskImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}
    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;

    friend bool operator==(const MaskImage&, const MaskImage&) = default;
};

// Pixels whose centers fall inside the box.
MaskImage box_mask(ImageSize size, const HBox& pixel_box);

// Box grown by `margin` times its width/height on every side, clamped to the image.
HBox dilate_box(const HBox& pixel_box, double margin, ImageSize size);

class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual std::string name() const = 0;
    // Throws SegmenterFailure when no mask can be produced for this box.
    virtual MaskImage segment_box(const GrayImage& image, const HBox& pixel_box) const = 0;
};

class BoxFillSegmenter final : public Segmenter {
public:
    std::string name() const override { return "boxfill"; }
    MaskImage segment_box(const GrayImage& image, const HBox& pixel_box) const override;
};

// Otsu threshold on the dilated box crop, keeping the largest 4-connected bright component.
class ThresholdSegmenter final : public Segmenter {
public:
    explicit ThresholdSegmenter(double dilation = 0.10) : dilation_(dilation) {}
    std::string name() const override { return "threshold"; }
    double dilation() const noexcept { return dilation_; }
    MaskImage segment_box(const GrayImage& image, const HBox& pixel_box) const override;

private:
    double dilation_;
};

std::unique_ptr<Segmenter> make_segmenter(const std::string& name, double dilation = 0.10);

// Otsu threshold over a 256-bin histogram of values in [0, 1]; nullopt for a constant input.
std::optional<double> otsu_threshold(std::span<const float> values);

struct SegmentResult {
    std::vector<MaskImage> masks;  // one per prompt
    std::vector<std::string> warnings;
};

// Per-box failures yield an empty mask and a warning.
SegmentResult segment(const GrayImage& image, const PromptSet& prompts, const Segmenter& segmenter);

// Binary PGM (P5, maxval 255, pixel values 0 or 255).
void write_mask(const MaskImage& mask, const std::filesystem::path& path);
MaskImage read_mask(const std::filesystem::path& path);
std::string encode_mask(const MaskImage& mask);
MaskImage decode_mask(const std::string& bytes);

struct MaskMetrics {
    double iou = 0.0;
    double pixel_accuracy = 0.0;
};

// Throws DimensionMismatch. Two empty masks have IoU 1.
MaskMetrics mask_metrics(const MaskImage& predicted, const MaskImage& reference);

struct SegmentationRunStats {
    std::size_t images = 0;
    std::size_t boxes = 0;
    std::size_t masks_written = 0;
    std::size_t failures = 0;
    std::size_t missing_images = 0;
    std::vector<std::string> warnings;
};

// Groups predictions by image, writes <out>/<image_id>/<i>.pgm and <out>/manifest.jsonl.
SegmentationRunStats segment_predictions(std::span<const Detection> predictions, const std::filesystem::path& images_dir,
                                         const Segmenter& segmenter, const std::filesystem::path& out_dir);

}  // namespace shipvl
