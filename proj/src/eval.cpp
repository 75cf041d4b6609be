#include "shipvl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "shipvl/error.hpp"

namespace shipvl {

namespace {

bool same_kind(const Box& a, const Box& b) { return a.index() == b.index(); }

std::vector<std::size_t> rank_order(std::span<const Detection> predictions) {
    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return predictions[a].confidence > predictions[b].confidence;
    });
    return order;
}

[[noreturn]] void bad_line(const std::filesystem::path& path, int line, const std::string& what) {
    fail(ErrorCode::FileFormatError, path.string() + ":" + std::to_string(line) + ": " + what);
}

Box box_from_json(const nlohmann::json& j, Task task) {
    if (!j.is_array()) throw std::invalid_argument("box must be an array of numbers");
    const std::size_t arity = task == Task::obb ? 8 : 4;
    if (j.size() != arity) {
        throw std::invalid_argument("box for task " + std::string(to_string(task)) + " needs " + std::to_string(arity) +
                                    " numbers, got " + std::to_string(j.size()));
    }
    std::vector<double> v;
    for (const auto& x : j) {
        if (!x.is_number()) throw std::invalid_argument("box entries must be numbers");
        const double d = x.get<double>();
        if (!std::isfinite(d) || d < -kBoundsEpsilon || d > 1.0 + kBoundsEpsilon) {
            throw std::invalid_argument("box coordinates must be normalized to [0, 1]");
        }
        v.push_back(std::clamp(d, 0.0, 1.0));
    }
    if (task == Task::hbb) return make_hbox(v[0], v[1], v[2], v[3]);
    const Quad q{Point{v[0], v[1]}, Point{v[2], v[3]}, Point{v[4], v[5]}, Point{v[6], v[7]}};
    return canonicalize_quad(q, CoordSpace::normalized());
}

nlohmann::ordered_json box_to_json(const Box& box) {
    auto out = nlohmann::ordered_json::array();
    if (const auto* h = std::get_if<HBox>(&box)) {
        out = {h->x_min, h->y_min, h->x_max, h->y_max};
    } else {
        for (const Point& p : std::get<OBox>(box).vertices()) {
            out.push_back(p.x);
            out.push_back(p.y);
        }
    }
    return out;
}

Task task_field(const nlohmann::json& j, Task expected) {
    const Task t = parse_task(j.at("task").get<std::string>());
    if (t != expected) {
        throw std::invalid_argument("task '" + std::string(to_string(t)) + "' does not match requested task '" +
                                    std::string(to_string(expected)) + "'");
    }
    return t;
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
            fn(j);
        } catch (const Error& e) {
            bad_line(path, line_no, e.what());
        } catch (const nlohmann::json::exception& e) {
            bad_line(path, line_no, e.what());
        } catch (const std::invalid_argument& e) {
            bad_line(path, line_no, e.what());
        }
    }
}

}  // namespace

MatchResult match_detections(std::span<const Detection> predictions, std::span<const Box> ground_truth,
                             double iou_threshold) {
    for (const Detection& d : predictions) {
        for (const Box& g : ground_truth) {
            if (!same_kind(d.box, g)) fail(ErrorCode::GeometryMismatch, "prediction and ground truth kinds differ");
        }
    }
    MatchResult out;
    out.num_gt = ground_truth.size();
    std::vector<bool> taken(ground_truth.size(), false);
    for (std::size_t idx : rank_order(predictions)) {
        RankedMatch m;
        m.detection = idx;
        m.confidence = predictions[idx].confidence;
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < ground_truth.size(); ++g) {
            if (taken[g]) continue;
            const double iou = box_iou(predictions[idx].box, ground_truth[g]);
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(g);
            }
        }
        m.iou = std::max(best_iou, 0.0);
        if (best >= 0 && best_iou >= iou_threshold) {
            taken[static_cast<std::size_t>(best)] = true;
            m.true_positive = true;
            m.gt_index = best;
            ++out.tp;
        } else {
            ++out.fp;
        }
        out.ranked.push_back(m);
    }
    out.fn = out.num_gt - out.tp;
    return out;
}

MatchResult match_detections(std::span<const Detection> predictions, std::span<const GroundTruth> ground_truth,
                             double iou_threshold) {
    std::map<std::string, const GroundTruth*> gt_by_image;
    MatchResult out;
    for (const GroundTruth& g : ground_truth) {
        gt_by_image[g.image_id] = &g;
        out.num_gt += g.boxes.size();
    }
    std::map<std::string, std::vector<std::size_t>> by_image;
    for (std::size_t i = 0; i < predictions.size(); ++i) by_image[predictions[i].image_id].push_back(i);

    std::vector<RankedMatch> per_detection(predictions.size());
    for (const auto& [image_id, indices] : by_image) {
        std::vector<Detection> local;
        local.reserve(indices.size());
        for (std::size_t i : indices) local.push_back(predictions[i]);
        const auto it = gt_by_image.find(image_id);
        const std::span<const Box> gts = it == gt_by_image.end() ? std::span<const Box>() : std::span<const Box>(it->second->boxes);
        for (const RankedMatch& m : match_detections(local, gts, iou_threshold).ranked) {
            RankedMatch global = m;
            global.detection = indices[m.detection];
            per_detection[global.detection] = global;
        }
    }
    for (std::size_t idx : rank_order(predictions)) {
        out.ranked.push_back(per_detection[idx]);
        if (per_detection[idx].true_positive) {
            ++out.tp;
        } else {
            ++out.fp;
        }
    }
    out.fn = out.num_gt - out.tp;
    return out;
}

PRCurve pr_curve(const MatchResult& matches) {
    if (matches.num_gt == 0) fail(ErrorCode::NoGroundTruth, "no ground-truth boxes; AP is undefined");
    PRCurve curve;
    curve.num_gt = matches.num_gt;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const RankedMatch& m : matches.ranked) {
        if (m.true_positive) {
            ++tp;
        } else {
            ++fp;
        }
        PRPoint p;
        p.tp = tp;
        p.fp = fp;
        p.fn = matches.num_gt - tp;
        p.recall = static_cast<double>(tp) / static_cast<double>(matches.num_gt);
        p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        p.confidence = m.confidence;
        curve.points.push_back(p);
    }
    return curve;
}

double average_precision(const PRCurve& curve) {
    const auto& pts = curve.points;
    std::vector<double> envelope(pts.size());
    double running = 0.0;
    for (std::size_t i = pts.size(); i-- > 0;) {
        running = std::max(running, pts[i].precision);
        envelope[i] = running;
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].recall > prev_recall) {
            ap += (pts[i].recall - prev_recall) * envelope[i];
            prev_recall = pts[i].recall;
        }
    }
    return std::clamp(ap, 0.0, 1.0);
}

const ThresholdResult* EvalReport::at(double iou_threshold) const {
    for (const ThresholdResult& r : results) {
        if (std::abs(r.iou_threshold - iou_threshold) < 1e-9) return &r;
    }
    return nullptr;
}

nlohmann::ordered_json EvalReport::to_json(bool include_curves) const {
    nlohmann::ordered_json j;
    j["method"] = method;
    j["dataset"] = dataset;
    j["task"] = std::string(to_string(task));
    j["num_images"] = num_images;
    j["num_predictions"] = num_predictions;
    j["num_ground_truth"] = num_ground_truth;
    j["results"] = nlohmann::ordered_json::array();
    for (const ThresholdResult& r : results) {
        nlohmann::ordered_json e;
        e["iou_threshold"] = r.iou_threshold;
        e["ap"] = r.ap;
        e["tp"] = r.tp;
        e["fp"] = r.fp;
        e["fn"] = r.fn;
        if (include_curves) {
            auto recall = nlohmann::ordered_json::array();
            auto precision = nlohmann::ordered_json::array();
            for (const PRPoint& p : r.curve.points) {
                recall.push_back(p.recall);
                precision.push_back(p.precision);
            }
            e["recall"] = recall;
            e["precision"] = precision;
        }
        j["results"].push_back(e);
    }
    return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    try {
        r.method = j.value("method", std::string("shipvl"));
        r.dataset = j.value("dataset", std::string());
        r.task = parse_task(j.at("task").get<std::string>());
        r.num_images = j.value("num_images", std::size_t{0});
        r.num_predictions = j.value("num_predictions", std::size_t{0});
        r.num_ground_truth = j.value("num_ground_truth", std::size_t{0});
        for (const auto& e : j.at("results")) {
            ThresholdResult t;
            t.iou_threshold = e.at("iou_threshold").get<double>();
            t.ap = e.at("ap").get<double>();
            t.tp = e.value("tp", std::size_t{0});
            t.fp = e.value("fp", std::size_t{0});
            t.fn = e.value("fn", std::size_t{0});
            t.curve.num_gt = r.num_ground_truth;
            if (e.contains("recall") && e.contains("precision")) {
                const auto& rec = e.at("recall");
                const auto& prec = e.at("precision");
                if (rec.size() != prec.size()) fail(ErrorCode::FormatError, "recall and precision lengths differ");
                for (std::size_t i = 0; i < rec.size(); ++i) {
                    PRPoint p;
                    p.recall = rec[i].get<double>();
                    p.precision = prec[i].get<double>();
                    t.curve.points.push_back(p);
                }
            }
            r.results.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::FormatError, std::string("malformed report: ") + e.what());
    }
    return r;
}

EvalReport evaluate(std::span<const Detection> predictions, std::span<const GroundTruth> ground_truth, Task task,
                    std::vector<double> thresholds) {
    if (thresholds.empty()) fail(ErrorCode::InvalidArgument, "at least one IoU threshold is required");
    for (double t : thresholds) {
        if (!(t > 0.0 && t <= 1.0)) fail(ErrorCode::InvalidArgument, "IoU thresholds must lie in (0, 1]");
    }
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    EvalReport report;
    report.task = task;
    report.num_predictions = predictions.size();
    std::map<std::string, bool> images;
    for (const GroundTruth& g : ground_truth) {
        images[g.image_id] = true;
        report.num_ground_truth += g.boxes.size();
    }
    for (const Detection& d : predictions) images[d.image_id] = true;
    report.num_images = images.size();

    for (double t : thresholds) {
        const MatchResult m = match_detections(predictions, ground_truth, t);
        ThresholdResult r;
        r.iou_threshold = t;
        r.tp = m.tp;
        r.fp = m.fp;
        r.fn = m.fn;
        r.curve = pr_curve(m);
        r.ap = average_precision(r.curve);
        report.results.push_back(std::move(r));
    }
    return report;
}

std::vector<Detection> read_predictions(const std::filesystem::path& path, Task task) {
    if (task == Task::caption) fail(ErrorCode::InvalidArgument, "captions cannot be evaluated for AP");
    std::vector<Detection> out;
    for_each_json_line(path, [&](const nlohmann::json& j) {
        task_field(j, task);
        Detection d;
        d.image_id = j.at("image_id").get<std::string>();
        d.box = box_from_json(j.at("box"), task);
        d.confidence = j.at("confidence").get<double>();
        if (!std::isfinite(d.confidence) || d.confidence < 0.0 || d.confidence > 1.0) {
            throw std::invalid_argument("confidence must lie in [0, 1]");
        }
        out.push_back(std::move(d));
    });
    return out;
}

std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path, Task task) {
    if (task == Task::caption) fail(ErrorCode::InvalidArgument, "captions cannot be evaluated for AP");
    std::vector<GroundTruth> out;
    std::map<std::string, std::size_t> index;
    for_each_json_line(path, [&](const nlohmann::json& j) {
        task_field(j, task);
        const auto id = j.at("image_id").get<std::string>();
        const auto& boxes = j.at("boxes");
        if (!boxes.is_array()) throw std::invalid_argument("boxes must be an array");
        auto [it, inserted] = index.emplace(id, out.size());
        if (inserted) out.push_back({id, {}});
        for (const auto& b : boxes) out[it->second].boxes.push_back(box_from_json(b, task));
    });
    return out;
}

nlohmann::ordered_json prediction_to_json(const Detection& detection, Task task) {
    nlohmann::ordered_json j;
    j["image_id"] = detection.image_id;
    j["task"] = std::string(to_string(task));
    j["box"] = box_to_json(detection.box);
    j["confidence"] = detection.confidence;
    return j;
}

nlohmann::ordered_json ground_truth_to_json(const GroundTruth& gt, Task task) {
    nlohmann::ordered_json j;
    j["image_id"] = gt.image_id;
    j["task"] = std::string(to_string(task));
    j["boxes"] = nlohmann::ordered_json::array();
    for (const Box& b : gt.boxes) j["boxes"].push_back(box_to_json(b));
    return j;
}

EvalReport evaluate(const std::filesystem::path& predictions, const std::filesystem::path& ground_truth, Task task,
                    std::vector<double> thresholds) {
    const auto preds = read_predictions(predictions, task);
    const auto gts = read_ground_truth(ground_truth, task);
    return evaluate(preds, gts, task, std::move(thresholds));
}

namespace {

// Crop with a context margin so a tight ship box shows contrast against its surroundings.
GrayImage context_crop(const GrayImage& image, const HBox& box) {
    const double mx = 0.25 * box.width();
    const double my = 0.25 * box.height();
    const int x0 = std::clamp(static_cast<int>(std::floor(box.x_min - mx)), 0, image.width() - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(box.y_min - my)), 0, image.height() - 1);
    const int x1 = std::clamp(static_cast<int>(std::ceil(box.x_max + mx)), x0 + 1, image.width());
    const int y1 = std::clamp(static_cast<int>(std::ceil(box.y_max + my)), y0 + 1, image.height());
    GrayImage crop(x1 - x0, y1 - y0);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) crop.at(x - x0, y - y0) = image.at(x, y);
    }
    return crop;
}

}  // namespace

PrototypeScorer::PrototypeScorer(std::uint64_t seed, int patch, int channels)
    : encoder_(fusion::Backbone::A, patch, channels, seed) {
    // A bright hull filling the central two thirds of a dark tile.
    const int side = 3 * patch;
    GrayImage tile(side, side, 0.1f);
    for (int y = side / 6; y < side - side / 6; ++y) {
        for (int x = side / 6; x < side - side / 6; ++x) tile.at(x, y) = 0.9f;
    }
    prototype_ = encoder_.embed_patch(tile);
}

double PrototypeScorer::score(const GrayImage& image, const HBox& pixel_box, const std::string&) const {
    const fusion::Vec e = encoder_.embed_patch(context_crop(image, pixel_box));
    const double denom = e.norm() * prototype_.norm();
    if (denom <= 0.0) return 0.5;
    return std::clamp(0.5 * (1.0 + e.dot(prototype_) / denom), 0.0, 1.0);
}

ConstantScorer::ConstantScorer(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) fail(ErrorCode::InvalidArgument, "constant score must lie in [0, 1]");
}

std::unique_ptr<ConfidenceScorer> make_scorer(const std::string& name) {
    if (name == "default") return std::make_unique<PrototypeScorer>();
    if (name == "constant") return std::make_unique<ConstantScorer>();
    fail(ErrorCode::UnknownFormat, "unknown scorer '" + name + "'");
}

double score_confidence(const ConfidenceScorer& scorer, const GrayImage& image, const Box& box,
                        const std::string& label) {
    if (image.empty()) fail(ErrorCode::ImageDecodeError, "cannot score on an empty image");
    const HBox norm = bounding_hbox(box);
    const HBox pixel = rescale(norm, CoordSpace::pixel(image.width(), image.height()));
    return scorer.score(image, pixel, label);
}

}  // namespace shipvl
