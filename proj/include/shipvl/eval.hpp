#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "shipvl/answer_codec.hpp"
#include "shipvl/fusion/encoder.hpp"
#include "shipvl/image.hpp"

namespace shipvl {

struct Detection {
    std::string image_id;
    Box box;  // normalized
    double confidence = 1.0;
};

struct GroundTruth {
    std::string image_id;
    std::vector<Box> boxes;  // normalized
};

inline const std::vector<double>& default_iou_thresholds() {
    static const std::vector<double> t{0.40, 0.50, 0.60};
    return t;
}

// Outcome of one prediction, listed in rank order.
struct RankedMatch {
    std::size_t detection = 0;  // index into the input predictions
    double confidence = 0.0;
    bool true_positive = false;
    int gt_index = -1;  // matched GT within its image, -1 for a false positive
    double iou = 0.0;   // best IoU against a still-unmatched GT
};

struct MatchResult {
    std::vector<RankedMatch> ranked;  // descending confidence, ties by input order
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t num_gt = 0;
};

// Single-image greedy matching. Throws GeometryMismatch on mixed box kinds.
MatchResult match_detections(std::span<const Detection> predictions, std::span<const Box> ground_truth, double iou_threshold);

// Multi-image matching; predictions for images absent from `ground_truth` are false positives.
MatchResult match_detections(std::span<const Detection> predictions, std::span<const GroundTruth> ground_truth,
                             double iou_threshold);

struct PRPoint {
    double recall = 0.0;
    double precision = 0.0;
    double confidence = 0.0;  // score of the last detection admitted by this cut
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

struct PRCurve {
    std::vector<PRPoint> points;  // one per rank, recall nondecreasing
    std::size_t num_gt = 0;
};

// Cumulative counts along the ranked list. Throws NoGroundTruth when there is nothing to recall.
PRCurve pr_curve(const MatchResult& matches);

// All-points interpolated AP: sum over recall steps of the precision envelope.
double average_precision(const PRCurve& curve);

struct ThresholdResult {
    double iou_threshold = 0.0;
    double ap = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    PRCurve curve;
};

struct EvalReport {
    std::string method = "shipvl";
    std::string dataset;
    Task task = Task::hbb;
    std::size_t num_images = 0;
    std::size_t num_predictions = 0;
    std::size_t num_ground_truth = 0;
    std::vector<ThresholdResult> results;  // ascending thresholds

    const ThresholdResult* at(double iou_threshold) const;
    nlohmann::ordered_json to_json(bool include_curves = true) const;
    static EvalReport from_json(const nlohmann::json& j);
};

EvalReport evaluate(std::span<const Detection> predictions, std::span<const GroundTruth> ground_truth, Task task,
                    std::vector<double> thresholds = default_iou_thresholds());

// JSONL readers; every problem is a FileFormatError naming the file and line.
//   predictions:  {"image_id": str, "task": "hbb"|"obb", "box": [4 or 8 numbers], "confidence": number}
//   ground truth: {"image_id": str, "task": "hbb"|"obb", "boxes": [[...], ...]}
std::vector<Detection> read_predictions(const std::filesystem::path& path, Task task);
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path, Task task);

nlohmann::ordered_json prediction_to_json(const Detection& detection, Task task);
nlohmann::ordered_json ground_truth_to_json(const GroundTruth& gt, Task task);

EvalReport evaluate(const std::filesystem::path& predictions, const std::filesystem::path& ground_truth, Task task,
                    std::vector<double> thresholds = default_iou_thresholds());

// Maps (image, normalized box, label) to a score in [0, 1].
class ConfidenceScorer {
public:
    virtual ~ConfidenceScorer() = default;
    virtual std::string name() const = 0;
    virtual double score(const GrayImage& image, const HBox& pixel_box, const std::string& label) const = 0;
};

// Cosine similarity between the frozen encoder embedding of the box crop and
// the embedding of a rendered "ship" prototype, mapped to [0, 1].
class PrototypeScorer final : public ConfidenceScorer {
public:
    explicit PrototypeScorer(std::uint64_t seed = 0, int patch = 8, int channels = 16);
    std::string name() const override { return "default"; }
    double score(const GrayImage& image, const HBox& pixel_box, const std::string& label) const override;

private:
    fusion::EncoderStandIn encoder_;
    fusion::Vec prototype_;
};

class ConstantScorer final : public ConfidenceScorer {
public:
    explicit ConstantScorer(double value = 1.0);
    std::string name() const override { return "constant"; }
    double score(const GrayImage&, const HBox&, const std::string&) const override { return value_; }

private:
    double value_;
};

std::unique_ptr<ConfidenceScorer> make_scorer(const std::string& name);  // "default" or "constant"

// Throws OutOfBounds when the normalized box leaves [0, 1]^2 beyond the bounds tolerance.
double score_confidence(const ConfidenceScorer& scorer, const GrayImage& image, const Box& box,
                        const std::string& label = "ship");

}  // namespace shipvl
