#pragma once

#include <cmath>
#include <vector>

#include "tcs/common.hpp"
#include "tcs/geometry.hpp"

namespace tcs {

struct AbdConfig {
    double lambda = 10.0 * kPi / 180.0;  // incidence-angle parameter, rad
    double sigma_r = 0.02;               // range noise margin, m
    int min_points = 3;
    double max_object_size = 0.6;        // m, cluster extent filter
    double center_pushback = 0.15;       // m, half a car depth

    void validate() const {
        if (lambda <= 0.0 || lambda >= kPi / 2.0) {
            throw OutOfRange("AbdConfig: lambda must be in (0, pi/2)");
        }
        if (sigma_r < 0.0) throw OutOfRange("AbdConfig: sigma_r must be >= 0");
        if (min_points < 1) throw OutOfRange("AbdConfig: min_points must be >= 1");
    }
};

struct PointCluster {
    std::vector<Vec2> points;
    std::vector<std::size_t> beam_indices;
};

// Adaptive-breakpoint segmentation: consecutive beams split when their
// Cartesian gap exceeds the range-adaptive threshold
// r_{n-1} * sin(dphi) / sin(lambda - dphi) + 3 * sigma_r.
inline std::vector<PointCluster> segment(const LidarScan& scan, const AbdConfig& cfg) {
    cfg.validate();
    scan.validate();
    if (scan.size() < 2) throw DegenerateScan("segment: need at least 2 beams");

    std::vector<PointCluster> clusters;
    PointCluster current;
    current.points.push_back(scan.point(0));
    current.beam_indices.push_back(0);

    auto flush = [&]() {
        if (static_cast<int>(current.points.size()) >= cfg.min_points) {
            clusters.push_back(std::move(current));
        }
        current = PointCluster{};
    };

    for (std::size_t n = 1; n < scan.size(); ++n) {
        const double dphi = scan.angles[n] - scan.angles[n - 1];
        const Vec2 p = scan.point(n);
        const Vec2 q = scan.point(n - 1);
        bool breakpoint = true;
        if (dphi > 0.0 && dphi < cfg.lambda) {
            const double threshold =
                scan.ranges[n - 1] * std::sin(dphi) / std::sin(cfg.lambda - dphi) +
                3.0 * cfg.sigma_r;
            breakpoint = (p - q).norm() > threshold;
        }
        if (breakpoint) flush();
        current.points.push_back(p);
        current.beam_indices.push_back(n);
    }
    flush();
    return clusters;
}

// Turns compact clusters into position-only detections: centroid pushed back
// along the sensor->centroid ray to compensate seeing only the near face.
inline std::vector<Detection> detect(const std::vector<PointCluster>& clusters,
                                     const AbdConfig& cfg) {
    cfg.validate();
    std::vector<Detection> dets;
    for (const auto& cluster : clusters) {
        if (static_cast<int>(cluster.points.size()) < cfg.min_points) continue;
        double extent = 0.0;
        const double limit2 = cfg.max_object_size * cfg.max_object_size;
        bool too_large = false;
        for (std::size_t a = 0; a < cluster.points.size() && !too_large; ++a) {
            for (std::size_t b = a + 1; b < cluster.points.size(); ++b) {
                const double d2 = (cluster.points[a] - cluster.points[b]).squared_norm();
                extent = std::max(extent, d2);
                if (d2 > limit2) {
                    too_large = true;
                    break;
                }
            }
        }
        if (too_large || std::sqrt(extent) > cfg.max_object_size) continue;

        Vec2 centroid;
        for (const Vec2& p : cluster.points) centroid = centroid + p;
        centroid = centroid * (1.0 / cluster.points.size());
        const double r = centroid.norm();
        if (r > 1e-9) {
            centroid = centroid * ((r + cfg.center_pushback) / r);
        }
        Detection d;
        d.x = centroid.x;
        d.y = centroid.y;
        d.score = 1.0;
        dets.push_back(d);
    }
    return dets;
}

inline std::vector<Detection> abd_detect(const LidarScan& scan, const AbdConfig& cfg) {
    return detect(segment(scan, cfg), cfg);
}

}  // namespace tcs
