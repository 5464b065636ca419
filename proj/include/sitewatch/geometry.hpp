#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace sitewatch {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned rectangle in normalized image coordinates, origin top-left.
struct BBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    Point center() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }

    /// Non-degenerate and inside the unit square.
    bool valid() const {
        return x_min < x_max && y_min < y_max && x_min >= 0.0 && y_min >= 0.0 &&
               x_max <= 1.0 && y_max <= 1.0;
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

inline double intersection_area(const BBox& a, const BBox& b) {
    const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

inline double iou(const BBox& a, const BBox& b) {
    const double inter = intersection_area(a, b);
    if (inter <= 0.0) return 0.0;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

namespace geom {

// Sign of the cross product (b - a) x (c - a).
inline int orientation(const Point& a, const Point& b, const Point& c) {
    const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if (v > 0.0) return 1;
    if (v < 0.0) return -1;
    return 0;
}

// c is collinear with a-b; is it within the segment's bounding box?
inline bool on_segment(const Point& a, const Point& b, const Point& c) {
    return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= c.y && c.y <= std::max(a.y, b.y);
}

/// Closed segment intersection: shared endpoints and collinear overlap count.
inline bool segments_intersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
    const int o1 = orientation(p1, p2, q1);
    const int o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1);
    const int o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
}

inline bool point_in_rect(const Point& p, const BBox& r) {
    return r.x_min <= p.x && p.x <= r.x_max && r.y_min <= p.y && p.y <= r.y_max;
}

/// Closed point-in-polygon: boundary points are inside.
inline bool point_in_polygon(const Point& p, std::span<const Point> poly) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % n];
        if (orientation(a, b, p) == 0 && on_segment(a, b, p)) return true;
    }
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = poly[i];
        const Point& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

/// A closed polygon is simple when no two edges meet except adjacent edges
/// at their shared vertex. Collinear overlap of adjacent edges is rejected.
inline bool polygon_is_simple(std::span<const Point> poly) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (poly[i] == poly[j]) return false;

    for (std::size_t i = 0; i < n; ++i) {
        const Point& a1 = poly[i];
        const Point& a2 = poly[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            const Point& b1 = poly[j];
            const Point& b2 = poly[(j + 1) % n];
            const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (!adjacent) {
                if (segments_intersect(a1, a2, b1, b2)) return false;
                continue;
            }
            // Adjacent edges share one vertex; fold-back onto each other is the
            // only way they can overlap.
            const Point& shared = (j == i + 1) ? a2 : a1;
            const Point& a_other = (j == i + 1) ? a1 : a2;
            const Point& b_other = (j == i + 1) ? b2 : b1;
            if (orientation(shared, a_other, b_other) == 0) {
                const double dot = (a_other.x - shared.x) * (b_other.x - shared.x) +
                                   (a_other.y - shared.y) * (b_other.y - shared.y);
                if (dot > 0.0) return false;
            }
        }
    }
    // Every vertex collinear means zero area.
    bool any_turn = false;
    for (std::size_t i = 0; i < n && !any_turn; ++i)
        any_turn = orientation(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) != 0;
    return any_turn;
}

inline std::array<Point, 4> corners(const BBox& r) {
    return {Point{r.x_min, r.y_min}, Point{r.x_max, r.y_min}, Point{r.x_max, r.y_max},
            Point{r.x_min, r.y_max}};
}

/// Exact closed-set intersection test between a rectangle and a simple polygon.
inline bool rect_intersects_polygon(const BBox& r, std::span<const Point> poly) {
    for (const Point& v : poly)
        if (point_in_rect(v, r)) return true;
    const auto c = corners(r);
    for (const Point& p : c)
        if (point_in_polygon(p, poly)) return true;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % n];
        for (std::size_t k = 0; k < 4; ++k)
            if (segments_intersect(a, b, c[k], c[(k + 1) % 4])) return true;
    }
    return false;
}

}  // namespace geom
}  // namespace sitewatch
