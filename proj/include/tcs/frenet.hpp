#pragma once

#include <limits>
#include <vector>

#include "tcs/common.hpp"
#include "tcs/geometry.hpp"

namespace tcs {

struct FrenetState {
    double s = 0.0;    // m along the reference line
    double d = 0.0;    // m lateral, left of travel positive
    double v_s = 0.0;  // m/s tangential
    double v_d = 0.0;  // m/s normal
};

// Piecewise-linear reference line with precomputed arc lengths.
class ReferenceLine {
public:
    explicit ReferenceLine(std::vector<Vec2> waypoints) : points_(std::move(waypoints)) {
        if (points_.size() < 2) throw EmptyInput("ReferenceLine: need >= 2 waypoints");
        cumulative_s_.resize(points_.size());
        cumulative_s_[0] = 0.0;
        for (std::size_t i = 1; i < points_.size(); ++i) {
            const double len = (points_[i] - points_[i - 1]).norm();
            if (len <= 0.0) throw EmptyInput("ReferenceLine: consecutive waypoints coincide");
            cumulative_s_[i] = cumulative_s_[i - 1] + len;
        }
    }

    const std::vector<Vec2>& waypoints() const { return points_; }
    const std::vector<double>& cumulative_s() const { return cumulative_s_; }
    double length() const { return cumulative_s_.back(); }

    // Unit tangent of segment i -> i+1.
    Vec2 tangent(std::size_t seg) const {
        const Vec2 d = points_[seg + 1] - points_[seg];
        const double n = d.norm();
        return {d.x / n, d.y / n};
    }

private:
    std::vector<Vec2> points_;
    std::vector<double> cumulative_s_;
};

// Projects (x, y) with velocity (v_x, v_y) onto the reference line.
// Per-segment projection, ties broken toward the lower s. Throws PointTooFar
// if the nearest distance exceeds d_max.
inline FrenetState cartesian_to_frenet(double x, double y, double v_x, double v_y,
                                       const ReferenceLine& ref, double d_max = 5.0) {
    const auto& pts = ref.waypoints();
    const Vec2 p{x, y};

    double best_dist2 = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    std::size_t best_seg = 0;
    Vec2 best_proj;

    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const Vec2 a = pts[i];
        const Vec2 seg = pts[i + 1] - a;
        const double len2 = seg.squared_norm();
        double t = (p - a).dot(seg) / len2;
        if (t < 0.0) t = 0.0;
        if (t > 1.0) t = 1.0;
        const Vec2 proj = a + seg * t;
        const double dist2 = (p - proj).squared_norm();
        const double s = ref.cumulative_s()[i] + t * std::sqrt(len2);
        // Strict '<' keeps the lower-s candidate on exact ties.
        if (dist2 < best_dist2 || (dist2 == best_dist2 && s < best_s)) {
            best_dist2 = dist2;
            best_s = s;
            best_seg = i;
            best_proj = proj;
        }
    }

    const double dist = std::sqrt(best_dist2);
    if (dist > d_max) throw PointTooFar("cartesian_to_frenet: point too far from reference line");

    const Vec2 tan = ref.tangent(best_seg);
    const Vec2 nrm{-tan.y, tan.x};  // left of travel
    const Vec2 off = p - best_proj;

    FrenetState f;
    f.s = best_s;
    f.d = off.dot(nrm);
    f.v_s = v_x * tan.x + v_y * tan.y;
    f.v_d = v_x * nrm.x + v_y * nrm.y;
    return f;
}

// Inverse mapping for position. Throws OutOfRange if s is outside [0, length].
inline Vec2 frenet_to_cartesian(const FrenetState& f, const ReferenceLine& ref) {
    const auto& cs = ref.cumulative_s();
    if (f.s < 0.0 || f.s > ref.length()) {
        throw OutOfRange("frenet_to_cartesian: s outside reference line");
    }
    std::size_t seg = 0;
    while (seg + 2 < cs.size() && cs[seg + 1] < f.s) ++seg;
    const Vec2 a = ref.waypoints()[seg];
    const Vec2 tan = ref.tangent(seg);
    const Vec2 nrm{-tan.y, tan.x};
    const double ds = f.s - cs[seg];
    return a + tan * ds + nrm * f.d;
}

}  // namespace tcs
