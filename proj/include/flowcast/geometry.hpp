#pragma once

#include "flowcast/common.hpp"

#include <vector>

namespace flowcast {

/// Twice the signed area of triangle (a, b, c); > 0 for counter-clockwise.
double orient2d(const Vec2& a, const Vec2& b, const Vec2& c);

/// Whether p lies strictly inside (or on, within tol) the polygon, by winding.
/// The polygon is a closed loop given without the repeated first vertex.
bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly);

/// Simple-polygon check: no two non-adjacent edges intersect, no zero-length
/// edges, at least 3 vertices.
bool polygon_is_simple(const std::vector<Vec2>& poly);

double polygon_area(const std::vector<Vec2>& poly);

/// Indices of the convex hull of `points` in counter-clockwise order
/// (Andrew monotone chain, collinear points dropped).
std::vector<uint32_t> convex_hull(const std::vector<Vec2>& points);

}  // namespace flowcast
