#include "flowcast/delaunay.hpp"
#include "flowcast/geometry.hpp"
#include "flowcast/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace flowcast;

namespace {

// Brute-force empty-circumcircle oracle, O(points x triangles).
bool delaunay_oracle(const std::vector<Vec2>& pts, const Triangulation& tri, double rel_tol = 1e-9) {
    double span = 0;
    for (const auto& p : pts) span = std::max(span, p.cwiseAbs().maxCoeff());
    span = std::max(span, 1.0);
    const double tol = rel_tol * span * span * span * span;

    for (const auto& t : tri.triangles) {
        Vec2 a = pts[t[0]], b = pts[t[1]], c = pts[t[2]];
        if (orient2d(a, b, c) < 0) std::swap(b, c);
        for (uint32_t i = 0; i < pts.size(); ++i) {
            if (i == t[0] || i == t[1] || i == t[2]) continue;
            const Vec2& d = pts[i];
            const double adx = a.x() - d.x(), ady = a.y() - d.y();
            const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
            const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
            const double det = adx * (bdy * (cdx * cdx + cdy * cdy) - cdy * (bdx * bdx + bdy * bdy)) -
                               ady * (bdx * (cdx * cdx + cdy * cdy) - cdx * (bdx * bdx + bdy * bdy)) +
                               (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy);
            if (det > tol) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("point_in_polygon handles interior, exterior and boundary") {
    const std::vector<Vec2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    CHECK(point_in_polygon({0.5, 0.5}, square));
    CHECK(point_in_polygon({0.0, 0.5}, square));  // on edge counts as inside
    CHECK_FALSE(point_in_polygon({1.5, 0.5}, square));
    CHECK_FALSE(point_in_polygon({-0.01, 0.5}, square));

    // Non-convex L-shape.
    const std::vector<Vec2> ell{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}};
    CHECK(point_in_polygon({0.5, 1.5}, ell));
    CHECK_FALSE(point_in_polygon({1.5, 1.5}, ell));
}

TEST_CASE("polygon_is_simple rejects self-intersections") {
    CHECK(polygon_is_simple({{0, 0}, {1, 0}, {1, 1}, {0, 1}}));
    CHECK_FALSE(polygon_is_simple({{0, 0}, {1, 1}, {1, 0}, {0, 1}}));  // bow tie
    CHECK_FALSE(polygon_is_simple({{0, 0}, {1, 0}}));
}

TEST_CASE("convex hull of a square with interior point") {
    std::vector<Vec2> pts{{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 1}};
    auto hull = convex_hull(pts);
    CHECK(hull.size() == 4);
    CHECK(std::find(hull.begin(), hull.end(), 4u) == hull.end());
}

TEST_CASE("triangle input gives one triangle, three edges") {
    const std::vector<Vec2> pts{{0, 0}, {1, 0}, {0.3, 0.8}};
    auto tri = delaunay_triangulate(pts);
    CHECK(tri.triangles.size() == 1);
    CHECK(tri.edges.size() == 3);
}

TEST_CASE("unit square splits along the diagonal at the lowest index") {
    const std::vector<Vec2> pts{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    auto tri = delaunay_triangulate(pts, pts);
    CHECK(tri.triangles.size() == 2);
    CHECK(tri.edges.size() == 5);
    // The four points are co-circular; the tie-break keeps the diagonal
    // incident to node 0, i.e. edge (0, 2) rather than (1, 3).
    CHECK(std::find(tri.edges.begin(), tri.edges.end(), Edge(0, 2)) != tri.edges.end());
    CHECK(std::find(tri.edges.begin(), tri.edges.end(), Edge(1, 3)) == tri.edges.end());
    CHECK(delaunay_oracle(pts, tri));
}

TEST_CASE("random point sets satisfy the empty-circumcircle oracle") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
        Rng rng(seed);
        std::vector<Vec2> pts;
        const int n = 20 + static_cast<int>(rng.uniform_int(41));  // up to about 60
        for (int i = 0; i < n; ++i) {
            // Random points in a disk.
            const double r = std::sqrt(rng.uniform());
            const double a = rng.uniform(0.0, 2 * 3.14159265358979);
            pts.emplace_back(r * std::cos(a), r * std::sin(a));
        }
        auto tri = delaunay_triangulate(pts);
        CAPTURE(seed);
        CHECK(delaunay_oracle(pts, tri));
        CHECK(tri.triangles.size() > 0);
    }
}

TEST_CASE("boundary filter drops triangles outside a non-convex polygon") {
    // L-shaped domain; points cover the bounding box corners so an
    // unrestricted triangulation would span the notch.
    const std::vector<Vec2> ell{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}};
    std::vector<Vec2> pts = ell;
    Rng rng(5);
    while (pts.size() < 40) {
        Vec2 p{rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)};
        if (point_in_polygon(p, ell)) pts.push_back(p);
    }
    auto tri = delaunay_triangulate(pts, ell);
    for (const auto& t : tri.triangles) {
        const Vec2 centroid = (pts[t[0]] + pts[t[1]] + pts[t[2]]) / 3.0;
        CHECK(point_in_polygon(centroid, ell));
    }
    CHECK(tri.triangles.size() > 10);
}

TEST_CASE("degenerate inputs are rejected") {
    CHECK_THROWS_AS(delaunay_triangulate({{0, 0}, {1, 0}}), DataError);
    CHECK_THROWS_AS(delaunay_triangulate({{0, 0}, {1, 0}, {2, 0}, {3, 0}}), DataError);
    CHECK_THROWS_AS(delaunay_triangulate({{0, 0}, {1, 0}, {1, 0}, {0, 1}}), DataError);
    const std::vector<Vec2> pts{{0, 0}, {1, 0}, {0.5, 0.8}};
    const std::vector<Vec2> bowtie{{0, 0}, {1, 1}, {1, 0}, {0, 1}};
    CHECK_THROWS_AS(delaunay_triangulate(pts, bowtie), DataError);
}

TEST_CASE("edges are canonical and unique") {
    Rng rng(11);
    std::vector<Vec2> pts;
    for (int i = 0; i < 30; ++i) pts.emplace_back(rng.uniform(), rng.uniform());
    auto tri = delaunay_triangulate(pts);
    for (size_t i = 0; i < tri.edges.size(); ++i) {
        CHECK(tri.edges[i].a < tri.edges[i].b);
        if (i > 0) CHECK(tri.edges[i - 1] < tri.edges[i]);
    }
}
