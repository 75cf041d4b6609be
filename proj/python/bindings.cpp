#include <map>
#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "shipvl/answer_codec.hpp"
#include "shipvl/commands.hpp"
#include "shipvl/error.hpp"
#include "shipvl/eval.hpp"
#include "shipvl/geometry.hpp"
#include "shipvl/labeling.hpp"
#include "shipvl/report.hpp"
#include "shipvl/segment.hpp"

namespace py = pybind11;
using namespace shipvl;

namespace {

using Coords = std::vector<double>;

Quad to_quad(const Coords& c) {
    if (c.size() != 8) throw py::value_error("a quad needs 8 numbers");
    return {Point{c[0], c[1]}, Point{c[2], c[3]}, Point{c[4], c[5]}, Point{c[6], c[7]}};
}

Coords from_box(const Box& box) {
    if (const auto* h = std::get_if<HBox>(&box)) return {h->x_min, h->y_min, h->x_max, h->y_max};
    Coords out;
    for (const Point& p : std::get<OBox>(box).vertices()) {
        out.push_back(p.x);
        out.push_back(p.y);
    }
    return out;
}

Box to_box(const Coords& c) {
    if (c.size() == 4) return make_hbox(c[0], c[1], c[2], c[3]);
    return canonicalize_quad(to_quad(c), CoordSpace::normalized());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Geometry, answer codec, evaluation and CLI entry points of shipvl";
    m.attr("__version__") = SHIPVL_VERSION;

    py::register_exception<Error>(m, "ShipvlError", PyExc_RuntimeError);

    m.def("hbb_iou", [](const Coords& a, const Coords& b) {
        if (a.size() != 4 || b.size() != 4) throw py::value_error("boxes need 4 numbers");
        return hbb_iou(make_hbox(a[0], a[1], a[2], a[3]), make_hbox(b[0], b[1], b[2], b[3]));
    }, "IoU of two [x_min, y_min, x_max, y_max] boxes", py::arg("a"), py::arg("b"));

    m.def("quad_iou", [](const Coords& a, const Coords& b) {
        return quad_iou(canonicalize_quad(to_quad(a), CoordSpace::normalized()),
                        canonicalize_quad(to_quad(b), CoordSpace::normalized()));
    }, "IoU of two convex quads given as 8 numbers", py::arg("a"), py::arg("b"));

    m.def("canonicalize_quad", [](const Coords& q) {
        return from_box(canonicalize_quad(to_quad(q), CoordSpace::normalized()));
    }, "Counter-clockwise vertex order starting nearest the origin", py::arg("quad"));

    m.def("serialize_answer", [](const std::vector<Coords>& boxes, const std::string& task) {
        std::vector<Box> b;
        for (const auto& c : boxes) b.push_back(to_box(c));
        return serialize_answer(b, parse_task(task));
    }, py::arg("boxes"), py::arg("task") = "hbb");

    m.def("parse_answer", [](const std::string& text, const std::string& task, bool deduplicate) {
        ParseOptions o;
        o.deduplicate = deduplicate;
        const DetectionAnswer a = parse_answer(text, parse_task(task), o);
        std::vector<Coords> boxes;
        for (const Box& b : a.boxes) boxes.push_back(from_box(b));
        std::vector<std::string> warnings;
        for (const Diagnostic& d : a.warnings) warnings.push_back(d.message);
        return py::make_tuple(boxes, warnings);
    }, "Returns (boxes, warnings); never raises on malformed text", py::arg("text"), py::arg("task") = "hbb",
          py::arg("deduplicate") = false);

    m.def("build_instruction", [](const std::string& task) { return build_instruction(parse_task(task)); },
          py::arg("task"));

    m.def("evaluate", [](const std::filesystem::path& preds, const std::filesystem::path& gt, const std::string& task,
                         const std::vector<double>& thresholds) {
        const EvalReport r = evaluate(preds, gt, parse_task(task), thresholds);
        std::map<std::string, double> out;
        for (const ThresholdResult& t : r.results) out[threshold_column(t.iou_threshold)] = t.ap;
        return out;
    }, "AP per threshold from prediction and ground-truth JSONL files", py::arg("preds"), py::arg("gt"),
          py::arg("task") = "hbb", py::arg("thresholds") = default_iou_thresholds());

    m.def("format_report_row", [](const std::string& method, const std::string& dataset, const std::vector<double>& aps,
                                  const std::string& style) {
        EvalReport r;
        r.method = method;
        r.dataset = dataset;
        const auto& t = default_iou_thresholds();
        if (aps.size() != t.size()) throw py::value_error("expected one AP per default threshold");
        for (std::size_t i = 0; i < t.size(); ++i) r.results.push_back({t[i], aps[i], 0, 0, 0, {}});
        return format_report(r, parse_report_style(style));
    }, py::arg("method"), py::arg("dataset"), py::arg("aps"), py::arg("style") = "table");

    m.def("mask_iou", [](const std::filesystem::path& a, const std::filesystem::path& b) {
        return mask_metrics(read_mask(a), read_mask(b)).iou;
    }, py::arg("predicted"), py::arg("reference"));

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
    }, "Runs a shipvl command in-process; returns (exit_code, stdout, stderr)", py::arg("args"));
}
