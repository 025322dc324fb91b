#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tcs/bev.hpp"
#include "tcs/geometry.hpp"

namespace tcs {

struct DecodeConfig {
    double score_threshold = 0.3;
    int nms_radius = 3;      // pixels
    int max_detections = 5;
    bool subpixel = true;

    void validate() const {
        if (score_threshold <= 0.0 || score_threshold >= 1.0) {
            throw OutOfRange("DecodeConfig: threshold must be in (0, 1)");
        }
        if (nms_radius < 1) throw OutOfRange("DecodeConfig: nms_radius must be >= 1");
    }
};

namespace detail {

// Vertex of the parabola through three samples (t0,y0), (t1,y1), (t2,y2).
// Returns 0 when the fit has no maximum.
inline double parabola_vertex(double t0, double y0, double t1, double y1, double t2,
                              double y2) {
    const double d01 = (y1 - y0) / (t1 - t0);
    const double d12 = (y2 - y1) / (t2 - t1);
    const double a = (d12 - d01) / (t2 - t0);
    if (a >= 0.0) return 0.0;
    const double b = d01 - a * (t0 + t1);
    return -b / (2.0 * a);
}

// Sub-pixel offset along one axis of a Gaussian-shaped peak. Works on log
// values, where the Gaussian is an exact parabola; at the image border the
// fit slides one cell inward onto untouched tail samples.
inline double subpixel_offset(const std::vector<double>& plane, int k, int pi, int pj,
                              bool along_i) {
    auto value = [&](int di) {
        const int i = along_i ? pi + di : pi;
        const int j = along_i ? pj : pj + di;
        return std::log(std::max(plane[static_cast<std::size_t>(i) * k + j], 1e-12));
    };
    const int c = along_i ? pi : pj;
    double off;
    if (c >= 1 && c <= k - 2) {
        off = parabola_vertex(-1, value(-1), 0, value(0), 1, value(1));
    } else if (c == 0) {
        if (k < 4) return 0.0;
        off = parabola_vertex(1, value(1), 2, value(2), 3, value(3));
    } else {
        if (k < 4) return 0.0;
        off = parabola_vertex(-3, value(-3), -2, value(-2), -1, value(-1));
    }
    return std::clamp(off, -0.5, 0.5);
}

}  // namespace detail

// Extracts discrete detections from a heatmap set: thresholded 3x3 local
// maxima of the position channel, greedy radius suppression, sub-pixel
// refinement of the peak position, amplitude readout of the regression
// channels at the integer peak cell.
inline std::vector<Detection> decode(const HeatmapSet& maps, const DecodeConfig& cfg,
                                     const BevConfig& bev) {
    cfg.validate();
    if (maps.k != bev.k) throw ShapeMismatch("decode: heatmap size does not match grid");
    const int k = maps.k;

    struct Peak {
        int i, j;
        double value;
    };
    std::vector<Peak> peaks;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double v = maps.pos[maps.idx(i, j)];
            if (v < cfg.score_threshold) continue;
            bool is_max = true;
            for (int di = -1; di <= 1 && is_max; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const int ni = i + di, nj = j + dj;
                    if (ni < 0 || ni >= k || nj < 0 || nj >= k) continue;
                    if (maps.pos[maps.idx(ni, nj)] > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) peaks.push_back({i, j, v});
        }
    }

    std::stable_sort(peaks.begin(), peaks.end(),
                     [](const Peak& a, const Peak& b) { return a.value > b.value; });

    std::vector<Peak> kept;
    for (const Peak& p : peaks) {
        bool suppressed = false;
        for (const Peak& q : kept) {
            const double di = p.i - q.i, dj = p.j - q.j;
            if (di * di + dj * dj <= static_cast<double>(cfg.nms_radius) * cfg.nms_radius) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(p);
        if (static_cast<int>(kept.size()) >= cfg.max_detections) break;
    }

    std::vector<Detection> dets;
    dets.reserve(kept.size());
    for (const Peak& p : kept) {
        double pi = p.i + 0.5, pj = p.j + 0.5;
        if (cfg.subpixel) {
            pi += detail::subpixel_offset(maps.pos, k, p.i, p.j, true);
            pj += detail::subpixel_offset(maps.pos, k, p.i, p.j, false);
        }
        Detection d;
        d.x = bev.x_of(pi);
        d.y = bev.y_of(pj);
        const std::size_t c = maps.idx(p.i, p.j);
        d.v_x = maps.v_x[c];
        d.v_y = maps.v_y[c];
        d.theta = maps.yaw[c];
        d.score = std::clamp(p.value, 0.0, 1.0);
        dets.push_back(d);
    }
    return dets;
}

struct MatchResult {
    std::vector<std::pair<int, int>> pairs;  // (detection index, gt index)
    std::vector<int> unmatched_dets;
    std::vector<int> unmatched_gts;
};

// Greedy nearest-distance association between detections and ground-truth
// states; pairs farther apart than the gate stay unmatched.
inline MatchResult match(const std::vector<Detection>& dets,
                         const std::vector<OppState>& gts, double gate = 1.0) {
    if (gate <= 0.0) throw OutOfRange("match: gate must be positive");
    struct Cand {
        double dist;
        int det, gt;
    };
    std::vector<Cand> cands;
    for (int d = 0; d < static_cast<int>(dets.size()); ++d) {
        for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
            const double dist =
                std::hypot(dets[d].x - gts[g].x, dets[d].y - gts[g].y);
            if (dist <= gate) cands.push_back({dist, d, g});
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.det != b.det) return a.det < b.det;
        return a.gt < b.gt;
    });

    MatchResult res;
    std::vector<char> det_used(dets.size(), 0), gt_used(gts.size(), 0);
    for (const Cand& c : cands) {
        if (det_used[c.det] || gt_used[c.gt]) continue;
        det_used[c.det] = 1;
        gt_used[c.gt] = 1;
        res.pairs.emplace_back(c.det, c.gt);
    }
    for (int d = 0; d < static_cast<int>(dets.size()); ++d) {
        if (!det_used[d]) res.unmatched_dets.push_back(d);
    }
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
        if (!gt_used[g]) res.unmatched_gts.push_back(g);
    }
    return res;
}

}  // namespace tcs
