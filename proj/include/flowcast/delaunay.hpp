#pragma once

#include "flowcast/common.hpp"

#include <array>
#include <vector>

namespace flowcast {

struct Triangulation {
    std::vector<std::array<uint32_t, 3>> triangles;  // ccw vertex indices
    std::vector<Edge> edges;                         // deduplicated, sorted
};

/// Delaunay triangulation (Bowyer-Watson) of `points`, restricted to a simple
/// boundary polygon: triangles whose centroid falls outside `boundary` are
/// discarded before the edge list is derived. Co-circular ties are resolved
/// towards the diagonal incident to the lowest vertex index.
///
/// Throws DataError for fewer than 3 points, collinear input, duplicate
/// points, or a non-simple boundary.
Triangulation delaunay_triangulate(const std::vector<Vec2>& points,
                                   const std::vector<Vec2>& boundary);

/// Unrestricted variant: triangulates the full convex hull.
Triangulation delaunay_triangulate(const std::vector<Vec2>& points);

}  // namespace flowcast
