#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shipvl/eval.hpp"

namespace shipvl {

enum class ReportStyle { table, csv, json };

std::string_view to_string(ReportStyle style) noexcept;
ReportStyle parse_report_style(std::string_view text);  // throws UnknownFormat

// Rendered cells: method, dataset, then one "AP@<percent>" column per threshold.
struct ReportTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

// AP as a percentage with two decimals, e.g. 0.5530 -> "55.30".
std::string format_percent(double ap);
std::string threshold_column(double iou_threshold);  // 0.4 -> "AP@40"

// Rows in input order; columns cover the union of thresholds (default 0.40/0.50/0.60).
ReportTable report_table(std::span<const EvalReport> reports);

std::string format_report(const ReportTable& table, ReportStyle style);
std::string format_report(std::span<const EvalReport> reports, ReportStyle style);
std::string format_report(const EvalReport& report, ReportStyle style);

// Inverse of the csv style (RFC 4180 quoting). Throws FormatError.
ReportTable parse_report_csv(std::string_view text);

// Sorted by AP@50 descending (stable). Throws InvalidArgument when tasks differ.
std::vector<EvalReport> merge_reports(std::vector<EvalReport> reports);

// Precision-recall plot of every report at one threshold.
std::string render_pr_svg(std::span<const EvalReport> reports, double iou_threshold = 0.5);

}  // namespace shipvl
