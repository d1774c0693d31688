#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "thermofuse/error.hpp"
#include "thermofuse/image.hpp"
#include "thermofuse/parallel.hpp"

namespace thermofuse {

struct Point {
    double x;  // column
    double y;  // row
};

/// Nonsingular 3x3 projective transform on pixel coordinates (x = column,
/// y = row, pixel centres on integers). Stored with h33 = 1 whenever h33 != 0.
class Homography {
public:
    Homography() : m_(Eigen::Matrix3d::Identity()) {}
    explicit Homography(const Eigen::Matrix3d& m) : m_(m) {
        if (!m_.allFinite()) throw DomainError("homography has non-finite entries");
        if (m_(2, 2) != 0.0) m_ /= m_(2, 2);
        const double det = m_.determinant();
        if (!(std::abs(det) > 1e-12 * std::pow(m_.cwiseAbs().maxCoeff(), 3))) {
            throw DomainError("homography is singular");
        }
    }

    static Homography identity() { return {}; }
    static Homography translation(double dx, double dy) {
        Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
        m(0, 2) = dx;
        m(1, 2) = dy;
        return Homography(m);
    }

    const Eigen::Matrix3d& matrix() const noexcept { return m_; }
    double operator()(int r, int c) const { return m_(r, c); }

    Homography inverse() const { return Homography(m_.inverse()); }

    /// (a * b) applies b first.
    friend Homography operator*(const Homography& a, const Homography& b) {
        return Homography(a.m_ * b.m_);
    }

    /// Maps a point; the third homogeneous coordinate is returned in `w`.
    Point apply(Point p, double* w = nullptr) const noexcept {
        const double xh = m_(0, 0) * p.x + m_(0, 1) * p.y + m_(0, 2);
        const double yh = m_(1, 0) * p.x + m_(1, 1) * p.y + m_(1, 2);
        const double wh = m_(2, 0) * p.x + m_(2, 1) * p.y + m_(2, 2);
        if (w) *w = wh;
        return {xh / wh, yh / wh};
    }

    std::array<double, 9> entries() const {
        std::array<double, 9> e{};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) e[static_cast<std::size_t>(r * 3 + c)] = m_(r, c);
        return e;
    }
    static Homography from_entries(const std::array<double, 9>& e) {
        Eigen::Matrix3d m;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m(r, c) = e[static_cast<std::size_t>(r * 3 + c)];
        return Homography(m);
    }

    bool operator==(const Homography& o) const { return m_ == o.m_; }

private:
    Eigen::Matrix3d m_;
};

struct Dims {
    std::size_t height;
    std::size_t width;
};

struct WarpResult {
    Map frame;
    Mask mask;
};

/// Resamples `frame` into the coordinates `h` maps it to: out(p) = frame(h^-1 p),
/// bilinear. A pixel is valid when its back-projection lies inside the hull of
/// source pixel centres and every neighbour with nonzero weight is valid in
/// `source_valid` (if given). Invalid pixels carry edge-replicated samples.
inline WarpResult warp(const Map& frame, const Homography& h, const Mask* source_valid = nullptr,
                       Dims out_dims = {0, 0}) {
    if (frame.empty()) throw ShapeError("warp of an empty frame");
    if (source_valid) require_same_shape(*source_valid, frame, "warp source mask");
    if (out_dims.height == 0) out_dims = {frame.height(), frame.width()};
    const Homography inv = h.inverse();
    const double ymax = static_cast<double>(frame.height() - 1);
    const double xmax = static_cast<double>(frame.width() - 1);

    WarpResult out{Map(out_dims.height, out_dims.width), Mask(out_dims.height, out_dims.width, 0)};
    parallel_for(out_dims.height, [&](std::size_t row) {
        for (std::size_t col = 0; col < out_dims.width; ++col) {
            double wh = 0.0;
            const Point s = inv.apply({static_cast<double>(col), static_cast<double>(row)}, &wh);
            const bool finite = wh > 0.0 && std::isfinite(s.x) && std::isfinite(s.y);
            if (!finite) {
                out.frame(row, col) = frame.clamped(0, 0);
                continue;
            }
            out.frame(row, col) = sample_bilinear(frame, s.y, s.x);
            bool valid = s.x >= 0.0 && s.x <= xmax && s.y >= 0.0 && s.y <= ymax;
            if (valid && source_valid) {
                const double fy = std::floor(s.y);
                const double fx = std::floor(s.x);
                const auto y0 = static_cast<std::size_t>(fy);
                const auto x0 = static_cast<std::size_t>(fx);
                const bool need_y1 = s.y > fy;
                const bool need_x1 = s.x > fx;
                valid = (*source_valid)(y0, x0) != 0 &&
                        (!need_x1 || (*source_valid)(y0, x0 + 1) != 0) &&
                        (!need_y1 || (*source_valid)(y0 + 1, x0) != 0) &&
                        (!need_x1 || !need_y1 || (*source_valid)(y0 + 1, x0 + 1) != 0);
            }
            out.mask(row, col) = valid ? 1 : 0;
        }
    });
    return out;
}

namespace detail {

using Polygon = std::vector<Point>;

inline double polygon_area(const Polygon& poly) {
    double twice = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % poly.size()];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

/// Sutherland-Hodgman clip of `subject` against one half-plane `inside(p) >= 0`.
template <typename Signed>
Polygon clip_half_plane(const Polygon& subject, Signed&& side) {
    Polygon out;
    if (subject.empty()) return out;
    for (std::size_t i = 0; i < subject.size(); ++i) {
        const Point& cur = subject[i];
        const Point& prev = subject[(i + subject.size() - 1) % subject.size()];
        const double sc = side(cur);
        const double sp = side(prev);
        if (sc >= 0.0) {
            if (sp < 0.0) {
                const double t = sp / (sp - sc);
                out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
            }
            out.push_back(cur);
        } else if (sp >= 0.0) {
            const double t = sp / (sp - sc);
            out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
        }
    }
    return out;
}

inline bool is_convex(const Polygon& poly) {
    int sign = 0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % poly.size()];
        const Point& c = poly[(i + 2) % poly.size()];
        const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if (cross == 0.0) continue;
        const int s = cross > 0.0 ? 1 : -1;
        if (sign != 0 && s != sign) return false;
        sign = s;
    }
    return sign != 0;
}

}  // namespace detail

/// Fraction of the pivot frame's pixel area [-0.5, w-0.5] x [-0.5, h-0.5]
/// covered by the source frame's area mapped through `h`. A quadrilateral that
/// folds, crosses the line at infinity or has zero area gives 0.
inline double overlap(const Homography& h, Dims dims) {
    const double x0 = -0.5;
    const double y0 = -0.5;
    const double x1 = static_cast<double>(dims.width) - 0.5;
    const double y1 = static_cast<double>(dims.height) - 0.5;
    detail::Polygon quad;
    for (const Point corner : {Point{x0, y0}, Point{x1, y0}, Point{x1, y1}, Point{x0, y1}}) {
        double w = 0.0;
        const Point p = h.apply(corner, &w);
        if (!(w > 0.0) || !std::isfinite(p.x) || !std::isfinite(p.y)) return 0.0;
        quad.push_back(p);
    }
    if (!detail::is_convex(quad)) return 0.0;
    if (detail::polygon_area(quad) < 0.0) std::reverse(quad.begin(), quad.end());

    auto clipped = detail::clip_half_plane(quad, [&](Point p) { return p.x - x0; });
    clipped = detail::clip_half_plane(clipped, [&](Point p) { return x1 - p.x; });
    clipped = detail::clip_half_plane(clipped, [&](Point p) { return p.y - y0; });
    clipped = detail::clip_half_plane(clipped, [&](Point p) { return y1 - p.y; });
    if (clipped.size() < 3) return 0.0;
    const double area = std::abs(detail::polygon_area(clipped));
    return std::clamp(area / ((x1 - x0) * (y1 - y0)), 0.0, 1.0);
}

}  // namespace thermofuse
