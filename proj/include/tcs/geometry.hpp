#pragma once

#include <cstddef>
#include <vector>

#include "tcs/common.hpp"

namespace tcs {

// One LiDAR sweep, sparse: beams with no return are simply absent.
// Angles are in the sensor (ego) frame and monotone increasing.
struct LidarScan {
    std::vector<double> angles;       // rad
    std::vector<double> ranges;       // m, in (0, r_max]
    std::vector<double> intensities;  // unitless, >= 0
    double timestamp = 0.0;           // s

    std::size_t size() const { return angles.size(); }

    void validate() const {
        if (angles.empty() || angles.size() != ranges.size() ||
            angles.size() != intensities.size()) {
            throw ShapeMismatch("LidarScan: angle/range/intensity lengths differ or empty");
        }
    }

    // Beam endpoint in the sensor frame.
    Vec2 point(std::size_t i) const {
        return {ranges[i] * std::cos(angles[i]), ranges[i] * std::sin(angles[i])};
    }
};

struct EgoState {
    double x = 0.0;      // m
    double y = 0.0;      // m
    double theta = 0.0;  // rad, in (-pi, pi]
};

struct OppState {
    double x = 0.0;      // m
    double y = 0.0;      // m
    double v_x = 0.0;    // m/s
    double v_y = 0.0;    // m/s
    double theta = 0.0;  // rad, in (-pi, pi]
};

// Decoded object hypothesis in the ego frame.
struct Detection {
    double x = 0.0;
    double y = 0.0;
    double v_x = 0.0;
    double v_y = 0.0;
    double theta = 0.0;
    double score = 1.0;  // in [0, 1]
};

// Expresses an opponent state in the ego frame: ego at the origin facing +x.
// Velocity is rotated only (no ego-motion subtraction); it stays the
// opponent's world velocity expressed in ego axes.
inline OppState global_to_local(const OppState& opp, const EgoState& ego) {
    const Vec2 dp = rotate({opp.x - ego.x, opp.y - ego.y}, -ego.theta);
    const Vec2 v = rotate({opp.v_x, opp.v_y}, -ego.theta);
    return {dp.x, dp.y, v.x, v.y, wrap_angle(opp.theta - ego.theta)};
}

inline OppState local_to_global(const OppState& local, const EgoState& ego) {
    const Vec2 dp = rotate({local.x, local.y}, ego.theta);
    const Vec2 v = rotate({local.v_x, local.v_y}, ego.theta);
    return {ego.x + dp.x, ego.y + dp.y, v.x, v.y, wrap_angle(local.theta + ego.theta)};
}

}  // namespace tcs
