#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shipvl/answer_codec.hpp"
#include "shipvl/geometry.hpp"
#include "shipvl/image.hpp"
#include "shipvl/rng.hpp"

namespace shipvl {

// Bright axis-aligned rectangles ("ships") on a dark noisy background.
struct SceneOptions {
    int size = 40;            // square image side in pixels
    int grid = 4;             // rectangle corners snap to multiples of this
    int min_extent = 8;       // minimum rectangle side in pixels
    int min_ships = 1;
    int max_ships = 1;
    float background = 0.1f;
    float foreground = 0.9f;
    double noise = 0.02;      // Gaussian pixel noise
};

struct SyntheticScene {
    GrayImage image;
    std::vector<HBox> pixel_boxes;  // pixel space, non-overlapping
    std::vector<HBox> boxes;        // the same boxes, normalized
};

SyntheticScene render_scene(Rng& rng, const SceneOptions& options = {});

// Short position/size description, e.g. "a large ship in the upper left."
std::string describe_scene(const SyntheticScene& scene);

struct SyntheticDatasetOptions {
    int count = 32;
    std::uint64_t seed = 1;
    SceneOptions scene;
    std::string prefix = "synth";
};

struct SyntheticSample {
    std::string image_id;
    SyntheticScene scene;
};

std::vector<SyntheticSample> make_synthetic_samples(const SyntheticDatasetOptions& options);

// Writes, under `root`:
//   images/<id>.pgm         rendered scenes
//   labels/<id>.txt         DOTA-style annotations (class "ship")
//   hbb.jsonl, obb.jsonl    instruction records per task
//   captions.jsonl          caption records for the alignment stage
//   gt_hbb.jsonl, gt_obb.jsonl  evaluation ground truth
std::vector<SyntheticSample> write_synthetic_dataset(const std::filesystem::path& root,
                                                     const SyntheticDatasetOptions& options);

}  // namespace shipvl
