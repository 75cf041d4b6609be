#include "shipvl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "shipvl/error.hpp"

namespace shipvl {

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::vector<double> report_thresholds(std::span<const EvalReport> reports) {
    std::vector<double> t;
    for (const EvalReport& r : reports) {
        for (const ThresholdResult& x : r.results) t.push_back(x.iou_threshold);
    }
    if (t.empty()) t = default_iou_thresholds();
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }), t.end());
    return t;
}

double ap_at(const EvalReport& r, double t) {
    const ThresholdResult* x = r.at(t);
    return x ? x->ap : -1.0;
}

}  // namespace

std::string_view to_string(ReportStyle style) noexcept {
    switch (style) {
        case ReportStyle::table: return "table";
        case ReportStyle::csv: return "csv";
        case ReportStyle::json: return "json";
    }
    return "table";
}

ReportStyle parse_report_style(std::string_view text) {
    if (text == "table") return ReportStyle::table;
    if (text == "csv") return ReportStyle::csv;
    if (text == "json") return ReportStyle::json;
    fail(ErrorCode::UnknownFormat, "unknown report style '" + std::string(text) + "'");
}

std::string format_percent(double ap) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", ap * 100.0);
    return buf;
}

std::string threshold_column(double iou_threshold) {
    return "AP@" + std::to_string(static_cast<int>(std::lround(iou_threshold * 100.0)));
}

ReportTable report_table(std::span<const EvalReport> reports) {
    ReportTable table;
    const auto thresholds = report_thresholds(reports);
    table.columns = {"method", "dataset"};
    for (double t : thresholds) table.columns.push_back(threshold_column(t));
    for (const EvalReport& r : reports) {
        std::vector<std::string> row{r.method, r.dataset};
        for (double t : thresholds) {
            const ThresholdResult* x = r.at(t);
            row.push_back(x ? format_percent(x->ap) : "-");
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string format_report(const ReportTable& table, ReportStyle style) {
    std::string out;
    if (style == ReportStyle::csv) {
        auto line = [&out](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i > 0) out += ',';
                out += csv_field(cells[i]);
            }
            out += '\n';
        };
        line(table.columns);
        for (const auto& row : table.rows) line(row);
        return out;
    }
    if (style == ReportStyle::json) {
        nlohmann::ordered_json j;
        j["columns"] = table.columns;
        j["rows"] = table.rows;
        return j.dump(2) + "\n";
    }
    std::vector<std::size_t> width(table.columns.size(), 0);
    for (std::size_t c = 0; c < table.columns.size(); ++c) width[c] = table.columns[c].size();
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        std::string text;
        for (std::size_t c = 0; c < width.size(); ++c) {
            const std::string cell = c < cells.size() ? cells[c] : "";
            if (c > 0) text += "  ";
            // Text columns are left-aligned, numbers right-aligned.
            const std::string pad(width[c] - cell.size(), ' ');
            text += c < 2 ? cell + pad : pad + cell;
        }
        while (!text.empty() && text.back() == ' ') text.pop_back();
        out += text + '\n';
    };
    line(table.columns);
    std::string rule;
    for (std::size_t c = 0; c < width.size(); ++c) {
        if (c > 0) rule += "  ";
        rule += std::string(width[c], '-');
    }
    out += rule + '\n';
    for (const auto& row : table.rows) line(row);
    return out;
}

std::string format_report(std::span<const EvalReport> reports, ReportStyle style) {
    return format_report(report_table(reports), style);
}

std::string format_report(const EvalReport& report, ReportStyle style) {
    return format_report(std::span<const EvalReport>(&report, 1), style);
}

ReportTable parse_report_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            quoted = true;
            any = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n') {
            record.push_back(std::move(field));
            field.clear();
            records.push_back(std::move(record));
            record.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
            any = true;
        }
    }
    if (quoted) fail(ErrorCode::FormatError, "unterminated quoted CSV field");
    if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    if (records.empty()) fail(ErrorCode::FormatError, "CSV report has no header");
    ReportTable table;
    table.columns = std::move(records.front());
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() != table.columns.size()) {
            fail(ErrorCode::FormatError, "CSV row " + std::to_string(i + 1) + " has " + std::to_string(records[i].size()) +
                                             " fields, expected " + std::to_string(table.columns.size()));
        }
        table.rows.push_back(std::move(records[i]));
    }
    return table;
}

std::vector<EvalReport> merge_reports(std::vector<EvalReport> reports) {
    for (const EvalReport& r : reports) {
        if (r.task != reports.front().task) {
            fail(ErrorCode::InvalidArgument, "cannot merge reports of tasks '" + std::string(to_string(reports.front().task)) +
                                                 "' and '" + std::string(to_string(r.task)) + "'");
        }
    }
    std::stable_sort(reports.begin(), reports.end(),
                     [](const EvalReport& a, const EvalReport& b) { return ap_at(a, 0.5) > ap_at(b, 0.5); });
    return reports;
}

std::string render_pr_svg(std::span<const EvalReport> reports, double iou_threshold) {
    constexpr int kWidth = 480;
    constexpr int kHeight = 400;
    constexpr int kLeft = 60;
    constexpr int kTop = 20;
    constexpr int kPlot = 320;
    static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    auto px = [](double r) { return kLeft + r * kPlot; };
    auto py = [](double p) { return kTop + (1.0 - p) * kPlot; };
    char buf[256];
    std::string svg;
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n", kWidth,
                  kHeight, kWidth, kHeight);
    svg += buf;
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"none\" stroke=\"black\"/>\n",
                  kLeft, kTop, kPlot, kPlot);
    svg += buf;
    for (int i = 0; i <= 4; ++i) {
        const double v = i / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%d\" font-size=\"11\" text-anchor=\"middle\">%.2f</text>\n"
                      "<text x=\"%d\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.2f</text>\n",
                      px(v), kTop + kPlot + 16, v, kLeft - 6, py(v) + 4, v);
        svg += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%d\" font-size=\"12\" text-anchor=\"middle\">recall</text>\n"
                  "<text x=\"16\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.1f)\">"
                  "precision</text>\n",
                  px(0.5), kTop + kPlot + 34, py(0.5), py(0.5));
    svg += buf;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const char* color = kColors[i % std::size(kColors)];
        const ThresholdResult* r = reports[i].at(iou_threshold);
        std::string points;
        if (r && !r->curve.points.empty()) {
            std::snprintf(buf, sizeof buf, "%.2f,%.2f", px(0.0), py(r->curve.points.front().precision));
            points += buf;
            for (const PRPoint& p : r->curve.points) {
                std::snprintf(buf, sizeof buf, " %.2f,%.2f", px(p.recall), py(p.precision));
                points += buf;
            }
            svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + points +
                   "\"/>\n";
        }
        const std::string label = reports[i].method + (reports[i].dataset.empty() ? "" : " / " + reports[i].dataset) +
                                  " " + threshold_column(iou_threshold) + " " + (r ? format_percent(r->ap) : "-");
        std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" font-size=\"11\" fill=\"%s\">", kLeft + 8,
                      kTop + 16 + 14 * static_cast<int>(i), color);
        svg += buf + xml_escape(label) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace shipvl
