#include "flowcast/delaunay.hpp"

#include "flowcast/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace flowcast {

namespace {

struct Tri {
    std::array<uint32_t, 3> v;
    bool alive = true;
};

// Positive iff d lies strictly inside the circumcircle of ccw triangle (a,b,c).
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double adx = a.x() - d.x(), ady = a.y() - d.y();
    const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
    const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
    const double ad2 = adx * adx + ady * ady;
    const double bd2 = bdx * bdx + bdy * bdy;
    const double cd2 = cdx * cdx + cdy * cdy;
    return adx * (bdy * cd2 - cdy * bd2) - ady * (bdx * cd2 - cdx * bd2) +
           ad2 * (bdx * cdy - cdx * bdy);
}

uint64_t edge_key(uint32_t a, uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<uint64_t>(a) << 32) | b;
}

}  // namespace

static Triangulation triangulate_impl(const std::vector<Vec2>& points,
                                      const std::vector<Vec2>* boundary) {
    const size_t n = points.size();
    if (n < 3) throw DataError("delaunay: need at least 3 points, got " + std::to_string(n));

    {
        std::vector<Vec2> sorted = points;
        std::sort(sorted.begin(), sorted.end(), [](const Vec2& p, const Vec2& q) {
            return p.x() != q.x() ? p.x() < q.x() : p.y() < q.y();
        });
        for (size_t i = 1; i < n; ++i)
            if (sorted[i] == sorted[i - 1]) throw DataError("delaunay: duplicate point");
    }

    Vec2 lo = points[0], hi = points[0];
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double span = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1e-12});

    {
        bool non_collinear = false;
        const double tol = 1e-12 * span * span;
        for (size_t i = 2; i < n && !non_collinear; ++i)
            if (std::abs(orient2d(points[0], points[1], points[i])) > tol) non_collinear = true;
        if (!non_collinear) throw DataError("delaunay: all points are collinear");
    }

    if (boundary) {
        if (boundary->size() < 3 || !polygon_is_simple(*boundary))
            throw DataError("delaunay: boundary polygon is not simple");
    }

    // Working point list gains a large enclosing super-triangle.
    std::vector<Vec2> pts = points;
    const Vec2 mid = 0.5 * (lo + hi);
    const double m = 64.0 * span;
    const auto s0 = static_cast<uint32_t>(n), s1 = s0 + 1, s2 = s0 + 2;
    pts.emplace_back(mid.x() - 2 * m, mid.y() - m);
    pts.emplace_back(mid.x() + 2 * m, mid.y() - m);
    pts.emplace_back(mid.x(), mid.y() + 2 * m);

    std::vector<Tri> tris;
    tris.push_back({{s0, s1, s2}, true});

    // The incircle determinant scales with length^4.
    const double cocircular_tol = 1e-9 * span * span * span * span;

    for (uint32_t pi = 0; pi < n; ++pi) {
        const Vec2& p = points[pi];

        // Cavity: triangles whose circumcircle strictly contains p. Points on
        // the circle (within tolerance) stay outside the cavity; the flip pass
        // below canonicalizes those co-circular configurations.
        std::map<uint64_t, std::pair<uint32_t, uint32_t>> border;  // key -> directed edge
        bool found = false;
        for (auto& t : tris) {
            if (!t.alive) continue;
            if (incircle(pts[t.v[0]], pts[t.v[1]], pts[t.v[2]], p) > cocircular_tol) {
                t.alive = false;
                found = true;
                for (int e = 0; e < 3; ++e) {
                    const uint32_t a = t.v[e], b = t.v[(e + 1) % 3];
                    const auto key = edge_key(a, b);
                    auto it = border.find(key);
                    if (it == border.end())
                        border.emplace(key, std::make_pair(a, b));
                    else
                        border.erase(it);  // interior edge, shared by two cavity triangles
                }
            }
        }
        if (!found) {
            // p is co-circular with (or on the edge of) every candidate; fall
            // back to the containing triangle so insertion always progresses.
            for (auto& t : tris) {
                if (!t.alive) continue;
                const Vec2 &a = pts[t.v[0]], &b = pts[t.v[1]], &c = pts[t.v[2]];
                if (orient2d(a, b, p) >= -cocircular_tol && orient2d(b, c, p) >= -cocircular_tol &&
                    orient2d(c, a, p) >= -cocircular_tol) {
                    t.alive = false;
                    for (int e = 0; e < 3; ++e)
                        border.emplace(edge_key(t.v[e], t.v[(e + 1) % 3]),
                                       std::make_pair(t.v[e], t.v[(e + 1) % 3]));
                    break;
                }
            }
        }
        for (const auto& [key, e] : border) {
            (void)key;
            std::array<uint32_t, 3> v{e.first, e.second, pi};
            if (orient2d(pts[v[0]], pts[v[1]], pts[v[2]]) < 0) std::swap(v[1], v[2]);
            tris.push_back({v, true});
        }
    }

    // Drop super-triangle incidences and rebuild compactly.
    std::vector<std::array<uint32_t, 3>> live;
    for (const auto& t : tris) {
        if (!t.alive) continue;
        if (t.v[0] >= n || t.v[1] >= n || t.v[2] >= n) continue;
        live.push_back(t.v);
    }

    // Deterministic co-circular tie-break: flip any co-circular quad so the
    // kept diagonal is incident to the lowest vertex index of the quad.
    for (int pass = 0; pass < 64; ++pass) {
        std::map<uint64_t, std::vector<size_t>> edge_tris;
        for (size_t ti = 0; ti < live.size(); ++ti)
            for (int e = 0; e < 3; ++e)
                edge_tris[edge_key(live[ti][e], live[ti][(e + 1) % 3])].push_back(ti);

        bool flipped = false;
        for (const auto& [key, owners] : edge_tris) {
            if (owners.size() != 2) continue;
            const auto a = static_cast<uint32_t>(key >> 32);
            const auto b = static_cast<uint32_t>(key & 0xffffffffu);
            auto opposite = [&](size_t ti) {
                for (uint32_t v : live[ti])
                    if (v != a && v != b) return v;
                return UINT32_MAX;
            };
            const uint32_t c = opposite(owners[0]);
            const uint32_t d = opposite(owners[1]);
            if (c == UINT32_MAX || d == UINT32_MAX || c == d) continue;

            std::array<uint32_t, 3> t1{a, b, c};
            if (orient2d(pts[t1[0]], pts[t1[1]], pts[t1[2]]) < 0) std::swap(t1[1], t1[2]);
            const double side = incircle(pts[t1[0]], pts[t1[1]], pts[t1[2]], pts[d]);

            const bool cocircular = std::abs(side) <= cocircular_tol;
            const bool violates = side > cocircular_tol;
            const uint32_t lowest = std::min({a, b, c, d});
            const bool prefer_cd = lowest == c || lowest == d;
            if (!(violates || (cocircular && prefer_cd))) continue;

            // Flip requires the quad to be strictly convex around the new diagonal.
            if (orient2d(pts[c], pts[d], pts[a]) * orient2d(pts[c], pts[d], pts[b]) >= 0) continue;

            std::array<uint32_t, 3> n1{c, d, a}, n2{d, c, b};
            if (orient2d(pts[n1[0]], pts[n1[1]], pts[n1[2]]) < 0) std::swap(n1[1], n1[2]);
            if (orient2d(pts[n2[0]], pts[n2[1]], pts[n2[2]]) < 0) std::swap(n2[1], n2[2]);
            live[owners[0]] = n1;
            live[owners[1]] = n2;
            flipped = true;
        }
        if (!flipped) break;
    }

    Triangulation out;
    for (const auto& t : live) {
        if (boundary) {
            const Vec2 centroid = (points[t[0]] + points[t[1]] + points[t[2]]) / 3.0;
            if (!point_in_polygon(centroid, *boundary)) continue;
        }
        out.triangles.push_back(t);
    }

    std::set<Edge> edge_set;
    for (const auto& t : out.triangles)
        for (int e = 0; e < 3; ++e) edge_set.insert(Edge(t[e], t[(e + 1) % 3]));
    out.edges.assign(edge_set.begin(), edge_set.end());
    return out;
}

Triangulation delaunay_triangulate(const std::vector<Vec2>& points,
                                   const std::vector<Vec2>& boundary) {
    return triangulate_impl(points, &boundary);
}

Triangulation delaunay_triangulate(const std::vector<Vec2>& points) {
    return triangulate_impl(points, nullptr);
}

}  // namespace flowcast
