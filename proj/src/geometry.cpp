#include "flowcast/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace flowcast {

double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
    // Crossing-number test with an on-edge tolerance relative to polygon size.
    const size_t n = poly.size();
    if (n < 3) return false;

    double scale = 0;
    for (const auto& v : poly) scale = std::max(scale, v.cwiseAbs().maxCoeff());
    const double tol = 1e-12 * std::max(1.0, scale);

    // On-boundary counts as inside.
    for (size_t i = 0; i < n; ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % n];
        const Vec2 ab = b - a;
        const double len2 = ab.squaredNorm();
        if (len2 == 0) continue;
        const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
        if ((a + t * ab - p).norm() <= tol) return true;
    }

    bool inside = false;
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        const bool crosses = (a.y() > p.y()) != (b.y() > p.y());
        if (crosses) {
            const double x_at = a.x() + (p.y() - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
            if (p.x() < x_at) inside = !inside;
        }
    }
    return inside;
}

namespace {

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
           std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
}

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double d1 = orient2d(c, d, a);
    const double d2 = orient2d(c, d, b);
    const double d3 = orient2d(a, b, c);
    const double d4 = orient2d(a, b, d);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
        ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    if (d1 == 0 && on_segment(c, d, a)) return true;
    if (d2 == 0 && on_segment(c, d, b)) return true;
    if (d3 == 0 && on_segment(a, b, c)) return true;
    if (d4 == 0 && on_segment(a, b, d)) return true;
    return false;
}

}  // namespace

bool polygon_is_simple(const std::vector<Vec2>& poly) {
    const size_t n = poly.size();
    if (n < 3) return false;
    for (size_t i = 0; i < n; ++i)
        if ((poly[(i + 1) % n] - poly[i]).squaredNorm() == 0) return false;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            // Skip adjacent edges (they share an endpoint by construction).
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
                return false;
        }
    }
    return true;
}

double polygon_area(const std::vector<Vec2>& poly) {
    double twice = 0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % n];
        twice += a.x() * b.y() - b.x() * a.y();
    }
    return std::abs(twice) * 0.5;
}

std::vector<uint32_t> convex_hull(const std::vector<Vec2>& points) {
    const size_t n = points.size();
    std::vector<uint32_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = static_cast<uint32_t>(i);
    std::sort(idx.begin(), idx.end(), [&](uint32_t a, uint32_t b) {
        if (points[a].x() != points[b].x()) return points[a].x() < points[b].x();
        return points[a].y() < points[b].y();
    });

    auto build = [&](auto begin, auto end) {
        std::vector<uint32_t> chain;
        for (auto it = begin; it != end; ++it) {
            while (chain.size() >= 2 &&
                   orient2d(points[chain[chain.size() - 2]], points[chain.back()], points[*it]) <= 0)
                chain.pop_back();
            chain.push_back(*it);
        }
        return chain;
    };

    std::vector<uint32_t> lower = build(idx.begin(), idx.end());
    std::vector<uint32_t> upper = build(idx.rbegin(), idx.rend());
    lower.pop_back();
    upper.pop_back();
    lower.insert(lower.end(), upper.begin(), upper.end());
    return lower;
}

}  // namespace flowcast
