#pragma once

#include <array>
#include <span>
#include <vector>

#include "shipvl/error.hpp"

namespace shipvl {

inline constexpr double kAreaEpsilon = 1e-12;    // normalized units
inline constexpr double kBoundsEpsilon = 1e-6;   // normalized units

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

// Coordinate frame a box lives in: pixels of a width x height image, or [0, 1]^2.
class CoordSpace {
public:
    static CoordSpace pixel(int width, int height);
    static CoordSpace normalized() { return CoordSpace{}; }

    bool is_pixel() const noexcept { return width_ > 0; }
    bool is_normalized() const noexcept { return width_ == 0; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    // Extent along each axis: image size for pixel spaces, 1 for normalized.
    double extent_x() const noexcept { return is_pixel() ? width_ : 1.0; }
    double extent_y() const noexcept { return is_pixel() ? height_ : 1.0; }

    // Degeneracy threshold scaled into this space.
    double area_epsilon() const noexcept { return kAreaEpsilon * extent_x() * extent_y(); }

    friend bool operator==(const CoordSpace&, const CoordSpace&) = default;

private:
    CoordSpace() = default;
    CoordSpace(int w, int h) : width_(w), height_(h) {}

    int width_ = 0;
    int height_ = 0;
};

struct HBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;
    CoordSpace space = CoordSpace::normalized();

    double width() const noexcept { return x_max - x_min; }
    double height() const noexcept { return y_max - y_min; }
    double area() const noexcept { return width() * height(); }
};

// Checked constructor: finite coordinates, min <= max.
HBox make_hbox(double x_min, double y_min, double x_max, double y_max,
               CoordSpace space = CoordSpace::normalized());

using Quad = std::array<Point, 4>;

// Oriented box as four vertices. A canonical OBox starts at the vertex nearest
// the origin and continues counter-clockwise (positive shoelace area, x right
// and y up), which is ascending polar angle about the vertex centroid.
class OBox {
public:
    // Unchecked, non-canonical quad. Use canonicalize_quad for the checked form.
    static OBox raw(const Quad& vertices, CoordSpace space = CoordSpace::normalized());

    const Quad& vertices() const noexcept { return vertices_; }
    const Point& operator[](std::size_t i) const { return vertices_[i]; }
    bool canonical() const noexcept { return canonical_; }
    const CoordSpace& space() const noexcept { return space_; }
    double area() const;

    friend OBox canonicalize_quad(std::span<const Point, 4> raw, CoordSpace space);

private:
    OBox(const Quad& v, CoordSpace s, bool canonical) : vertices_(v), space_(s), canonical_(canonical) {}

    Quad vertices_{};
    CoordSpace space_ = CoordSpace::normalized();
    bool canonical_ = false;
};

struct Polygon {
    std::vector<Point> vertices;

    bool empty() const noexcept { return vertices.size() < 3; }
};

// Throws DegenerateQuad (area below the space's epsilon) or SelfIntersecting
// (the four points are not in convex position). Any input permutation of the
// same four points yields the same result.
OBox canonicalize_quad(std::span<const Point, 4> raw, CoordSpace space);
inline OBox canonicalize_quad(const Quad& raw, CoordSpace space) {
    return canonicalize_quad(std::span<const Point, 4>(raw), space);
}
inline OBox canonicalize(const OBox& box) { return canonicalize_quad(box.vertices(), box.space()); }

double signed_area(std::span<const Point> ring);
double polygon_area(const Polygon& polygon);

// Sutherland-Hodgman: subject intersected with a convex clip polygon of either winding.
Polygon polygon_clip(const Polygon& subject, const Polygon& clip);

double hbb_iou(const HBox& a, const HBox& b);
double quad_iou(const OBox& a, const OBox& b);

OBox hbox_to_quad(const HBox& box);
HBox quad_bounding_hbox(const OBox& box);

// Linear map between coordinate spaces. The source space is the box's own tag;
// throws OutOfBounds when the box lies outside its space by more than the
// bounds tolerance. OBoxes are re-canonicalized in the target space.
HBox rescale(const HBox& box, const CoordSpace& to);
OBox rescale(const OBox& box, const CoordSpace& to);
HBox rescale(const HBox& box, const CoordSpace& from, const CoordSpace& to);
OBox rescale(const OBox& box, const CoordSpace& from, const CoordSpace& to);

// Clamp into the space's bounds (used where noisy inputs are tolerated).
HBox clamp_to_space(const HBox& box);

}  // namespace shipvl
