#include "shipvl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace shipvl {

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool finite(const Point& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

std::string describe(std::span<const Point> pts) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) os << ", ";
        os << '(' << pts[i].x << ',' << pts[i].y << ')';
    }
    os << ']';
    return os.str();
}

// Andrew's monotone chain; collinear points are dropped. Result is counter-clockwise.
std::vector<Point> convex_hull(std::vector<Point> pts, double collinear_tol) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;

    std::vector<Point> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= collinear_tol) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= collinear_tol) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

void check_in_bounds(std::span<const Point> pts, const CoordSpace& space) {
    const double tol_x = kBoundsEpsilon * space.extent_x();
    const double tol_y = kBoundsEpsilon * space.extent_y();
    for (const auto& p : pts) {
        if (!finite(p) || p.x < -tol_x || p.y < -tol_y || p.x > space.extent_x() + tol_x ||
            p.y > space.extent_y() + tol_y) {
            fail(ErrorCode::OutOfBounds, "coordinates " + describe(pts) + " fall outside the coordinate space");
        }
    }
}

Point map_point(const Point& p, const CoordSpace& from, const CoordSpace& to) {
    return {p.x / from.extent_x() * to.extent_x(), p.y / from.extent_y() * to.extent_y()};
}

}  // namespace

CoordSpace CoordSpace::pixel(int width, int height) {
    if (width <= 0 || height <= 0) {
        fail(ErrorCode::InvalidArgument, "pixel space needs positive width and height");
    }
    return CoordSpace(width, height);
}

HBox make_hbox(double x_min, double y_min, double x_max, double y_max, CoordSpace space) {
    if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) || !std::isfinite(y_max)) {
        fail(ErrorCode::InvalidArgument, "box coordinates must be finite");
    }
    if (x_min > x_max || y_min > y_max) {
        fail(ErrorCode::InvalidArgument, "box needs x_min <= x_max and y_min <= y_max");
    }
    return HBox{x_min, y_min, x_max, y_max, space};
}

OBox OBox::raw(const Quad& vertices, CoordSpace space) {
    return OBox(vertices, space, false);
}

double OBox::area() const {
    return std::abs(signed_area(vertices_));
}

OBox canonicalize_quad(std::span<const Point, 4> raw, CoordSpace space) {
    for (const auto& p : raw) {
        if (!finite(p)) fail(ErrorCode::InvalidArgument, "quad vertices must be finite");
    }
    std::vector<Point> pts(raw.begin(), raw.end());

    double extent = 0.0;
    for (const auto& p : pts) extent = std::max({extent, std::abs(p.x), std::abs(p.y)});
    const double collinear_tol = 1e-12 * std::max(1.0, extent * extent);

    const auto hull = convex_hull(pts, collinear_tol);
    const double hull_area = hull.size() >= 3 ? std::abs(signed_area(hull)) : 0.0;
    if (hull_area < space.area_epsilon()) {
        fail(ErrorCode::DegenerateQuad, "quad " + describe(raw) + " has (near) zero area");
    }
    if (hull.size() != 4) {
        fail(ErrorCode::SelfIntersecting, "points " + describe(raw) + " are not in convex position");
    }

    std::array<double, 4> dist{};
    for (std::size_t i = 0; i < 4; ++i) dist[i] = hull[i].x * hull[i].x + hull[i].y * hull[i].y;
    const double d_min = *std::min_element(dist.begin(), dist.end());
    const double tie_tol = 1e-12 * std::max(1.0, d_min);

    std::size_t start = 4;
    for (std::size_t i = 0; i < 4; ++i) {
        if (dist[i] - d_min > tie_tol) continue;
        if (start == 4) {
            start = i;
            continue;
        }
        const double ai = std::atan2(hull[i].y, hull[i].x);
        const double as = std::atan2(hull[start].y, hull[start].x);
        if (ai < as || (ai == as && hull[i].x < hull[start].x)) start = i;
    }

    Quad ordered{};
    for (std::size_t i = 0; i < 4; ++i) ordered[i] = hull[(start + i) % 4];
    return OBox(ordered, space, true);
}

double signed_area(std::span<const Point> ring) {
    if (ring.size() < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
        twice += ring[j].x * ring[i].y - ring[i].x * ring[j].y;
    }
    return 0.5 * twice;
}

double polygon_area(const Polygon& polygon) {
    return std::abs(signed_area(polygon.vertices));
}

Polygon polygon_clip(const Polygon& subject, const Polygon& clip) {
    if (subject.empty() || clip.empty()) return {};

    std::vector<Point> window = clip.vertices;
    if (signed_area(window) < 0.0) std::reverse(window.begin(), window.end());

    std::vector<Point> output = subject.vertices;
    std::vector<Point> input;
    for (std::size_t e = 0; e < window.size() && !output.empty(); ++e) {
        const Point& a = window[e];
        const Point& b = window[(e + 1) % window.size()];
        input.swap(output);
        output.clear();
        for (std::size_t i = 0; i < input.size(); ++i) {
            const Point& cur = input[i];
            const Point& prev = input[(i + input.size() - 1) % input.size()];
            const double s_cur = cross(a, b, cur);
            const double s_prev = cross(a, b, prev);
            const bool cur_in = s_cur >= 0.0;
            const bool prev_in = s_prev >= 0.0;
            if (cur_in != prev_in) {
                const double t = s_prev / (s_prev - s_cur);
                output.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
            }
            if (cur_in) output.push_back(cur);
        }
    }

    // Drop repeated vertices produced where the subject touches a clip edge.
    std::vector<Point> cleaned;
    for (const auto& p : output) {
        if (cleaned.empty() || !(p == cleaned.back())) cleaned.push_back(p);
    }
    while (cleaned.size() > 1 && cleaned.front() == cleaned.back()) cleaned.pop_back();

    Polygon result{std::move(cleaned)};
    if (result.empty() || polygon_area(result) == 0.0) return {};
    return result;
}

double hbb_iou(const HBox& a, const HBox& b) {
    if (!(a.space == b.space)) fail(ErrorCode::SpaceMismatch, "boxes live in different coordinate spaces");
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double quad_iou(const OBox& a, const OBox& b) {
    if (!(a.space() == b.space())) fail(ErrorCode::SpaceMismatch, "quads live in different coordinate spaces");
    const OBox ca = a.canonical() ? a : canonicalize(a);
    const OBox cb = b.canonical() ? b : canonicalize(b);
    const double area_a = ca.area();
    const double area_b = cb.area();
    if (area_a < ca.space().area_epsilon() || area_b < cb.space().area_epsilon()) {
        fail(ErrorCode::DegenerateQuad, "IoU of a zero-area quad is undefined");
    }
    // Fixed operand order makes the result bitwise symmetric.
    const bool swap = std::lexicographical_compare(cb.vertices().begin(), cb.vertices().end(), ca.vertices().begin(),
                                                   ca.vertices().end(), [](const Point& p, const Point& q) {
                                                       return p.x != q.x ? p.x < q.x : p.y < q.y;
                                                   });
    const OBox& first = swap ? cb : ca;
    const OBox& second = swap ? ca : cb;
    const Polygon pa{{first.vertices().begin(), first.vertices().end()}};
    const Polygon pb{{second.vertices().begin(), second.vertices().end()}};
    const double inter = polygon_area(polygon_clip(pa, pb));
    const double uni = area_a + area_b - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

OBox hbox_to_quad(const HBox& box) {
    const Quad corners{{{box.x_min, box.y_min}, {box.x_max, box.y_min}, {box.x_max, box.y_max}, {box.x_min, box.y_max}}};
    return canonicalize_quad(corners, box.space);
}

HBox quad_bounding_hbox(const OBox& box) {
    const auto& v = box.vertices();
    HBox out{v[0].x, v[0].y, v[0].x, v[0].y, box.space()};
    for (const auto& p : v) {
        out.x_min = std::min(out.x_min, p.x);
        out.y_min = std::min(out.y_min, p.y);
        out.x_max = std::max(out.x_max, p.x);
        out.y_max = std::max(out.y_max, p.y);
    }
    return out;
}

HBox rescale(const HBox& box, const CoordSpace& to) {
    const std::array<Point, 2> corners{{{box.x_min, box.y_min}, {box.x_max, box.y_max}}};
    check_in_bounds(corners, box.space);
    const Point lo = map_point(corners[0], box.space, to);
    const Point hi = map_point(corners[1], box.space, to);
    return HBox{lo.x, lo.y, hi.x, hi.y, to};
}

OBox rescale(const OBox& box, const CoordSpace& to) {
    check_in_bounds(box.vertices(), box.space());
    Quad mapped{};
    for (std::size_t i = 0; i < 4; ++i) mapped[i] = map_point(box[i], box.space(), to);
    // Anisotropic scaling can change which vertex is nearest the origin.
    if (box.canonical()) return canonicalize_quad(mapped, to);
    return OBox::raw(mapped, to);
}

HBox rescale(const HBox& box, const CoordSpace& from, const CoordSpace& to) {
    if (!(box.space == from)) fail(ErrorCode::SpaceMismatch, "box is not tagged with the source space");
    return rescale(box, to);
}

OBox rescale(const OBox& box, const CoordSpace& from, const CoordSpace& to) {
    if (!(box.space() == from)) fail(ErrorCode::SpaceMismatch, "quad is not tagged with the source space");
    return rescale(box, to);
}

HBox clamp_to_space(const HBox& box) {
    const double ex = box.space.extent_x();
    const double ey = box.space.extent_y();
    return HBox{std::clamp(box.x_min, 0.0, ex), std::clamp(box.y_min, 0.0, ey),
                std::clamp(box.x_max, 0.0, ex), std::clamp(box.y_max, 0.0, ey), box.space};
}

}  // namespace shipvl
