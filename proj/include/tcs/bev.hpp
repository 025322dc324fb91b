#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "tcs/common.hpp"
#include "tcs/geometry.hpp"

namespace tcs {

// Grid rule: the sensor sits at the midpoint of the left image edge facing
// +x. Cell (i, j) covers x in [i*p, (i+1)*p) and y in [(j-k/2)*p, (j-k/2+1)*p),
// so i indexes forward and j lateral; the field of view is (k*p)^2.
struct BevConfig {
    int k = 64;             // pixels per side, even, >= 8
    double p = 0.1;         // meters per pixel
    double sigma_gt = 2.0;  // Gaussian target std, pixels

    void validate() const {
        if (k < 8 || (k % 2) != 0) throw OutOfRange("BevConfig: k must be even and >= 8");
        if (p <= 0.0) throw OutOfRange("BevConfig: p must be positive");
        if (sigma_gt <= 0.0) throw OutOfRange("BevConfig: sigma_gt must be positive");
    }

    double extent_x() const { return k * p; }
    double half_extent_y() const { return 0.5 * k * p; }

    bool in_fov(double x, double y) const {
        return x >= 0.0 && x < extent_x() && y >= -half_extent_y() && y < half_extent_y();
    }

    // Continuous pixel coordinates of a metric point.
    double px_i(double x) const { return x / p; }
    double px_j(double y) const { return y / p + 0.5 * k; }

    // Metric coordinates of continuous pixel coordinates.
    double x_of(double pi) const { return pi * p; }
    double y_of(double pj) const { return (pj - 0.5 * k) * p; }

    int cell_i(double x) const { return static_cast<int>(std::floor(px_i(x))); }
    int cell_j(double y) const { return static_cast<int>(std::floor(px_j(y))); }
};

// One rasterized frame: binary occupancy, per-cell max intensity normalized
// by the frame max, and per-cell point count normalized by the frame max.
struct BevFrame {
    int k = 0;
    std::vector<double> occupancy;
    std::vector<double> intensity;
    std::vector<double> density;

    BevFrame() = default;
    explicit BevFrame(int k_)
        : k(k_), occupancy(k_ * k_, 0.0), intensity(k_ * k_, 0.0), density(k_ * k_, 0.0) {}

    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * k + j; }
};

// Two stacked frames, older first: [prev.occ, prev.int, prev.den,
// curr.occ, curr.int, curr.den].
struct BevInput {
    int k = 0;
    std::vector<double> channels;  // 6 * k * k

    static constexpr int kChannels = 6;

    const double* channel(int c) const { return channels.data() + static_cast<std::size_t>(c) * k * k; }
    double* channel(int c) { return channels.data() + static_cast<std::size_t>(c) * k * k; }
};

// Four target/prediction maps: object-center Gaussian plus dense velocity
// and yaw regression channels.
struct HeatmapSet {
    int k = 0;
    std::vector<double> pos;
    std::vector<double> v_x;
    std::vector<double> v_y;
    std::vector<double> yaw;

    HeatmapSet() = default;
    explicit HeatmapSet(int k_)
        : k(k_), pos(k_ * k_, 0.0), v_x(k_ * k_, 0.0), v_y(k_ * k_, 0.0), yaw(k_ * k_, 0.0) {}

    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * k + j; }

    std::vector<double>* channel(int c) {
        std::vector<double>* chans[4] = {&pos, &v_x, &v_y, &yaw};
        return chans[c];
    }
    const std::vector<double>* channel(int c) const {
        const std::vector<double>* chans[4] = {&pos, &v_x, &v_y, &yaw};
        return chans[c];
    }
};

inline BevFrame rasterize(const LidarScan& scan, const BevConfig& cfg) {
    cfg.validate();
    BevFrame frame(cfg.k);
    std::vector<int> counts(static_cast<std::size_t>(cfg.k) * cfg.k, 0);

    double max_intensity = 0.0;
    int max_count = 0;
    for (std::size_t b = 0; b < scan.size(); ++b) {
        const Vec2 pt = scan.point(b);
        if (!cfg.in_fov(pt.x, pt.y)) continue;
        const int i = cfg.cell_i(pt.x);
        const int j = cfg.cell_j(pt.y);
        if (i < 0 || i >= cfg.k || j < 0 || j >= cfg.k) continue;
        const std::size_t c = frame.idx(i, j);
        frame.occupancy[c] = 1.0;
        frame.intensity[c] = std::max(frame.intensity[c], scan.intensities[b]);
        counts[c] += 1;
        max_intensity = std::max(max_intensity, frame.intensity[c]);
        max_count = std::max(max_count, counts[c]);
    }

    for (std::size_t c = 0; c < frame.occupancy.size(); ++c) {
        frame.intensity[c] = max_intensity > 0.0 ? frame.intensity[c] / max_intensity : 0.0;
        frame.density[c] = max_count > 0 ? static_cast<double>(counts[c]) / max_count : 0.0;
    }
    return frame;
}

inline BevInput stack(const BevFrame& prev, const BevFrame& curr) {
    if (prev.k != curr.k || prev.k == 0) throw ShapeMismatch("stack: frame sizes differ");
    BevInput input;
    input.k = prev.k;
    const std::size_t plane = static_cast<std::size_t>(prev.k) * prev.k;
    input.channels.resize(BevInput::kChannels * plane);
    const std::vector<double>* planes[6] = {&prev.occupancy, &prev.intensity, &prev.density,
                                            &curr.occupancy, &curr.intensity, &curr.density};
    for (int c = 0; c < 6; ++c) {
        std::copy(planes[c]->begin(), planes[c]->end(), input.channels.begin() + c * plane);
    }
    return input;
}

// Draws per-object Gaussian kernels, evaluated at cell centers against the
// continuous keypoint; the keypoint's own cell stores the amplitude exactly.
// Where objects overlap, the nearest keypoint wins the whole cell so the
// regression channels stay attributable to one object.
inline HeatmapSet make_targets(const std::vector<OppState>& opps, const BevConfig& cfg,
                               int* skipped_out_of_fov = nullptr) {
    cfg.validate();
    HeatmapSet maps(cfg.k);
    if (skipped_out_of_fov) *skipped_out_of_fov = 0;

    struct Keypoint {
        double pi, pj;  // continuous pixel coords
        double amp[4];  // per-channel amplitude
        std::vector<double> gi, gj;  // separable Gaussian factors per axis
    };
    std::vector<Keypoint> kps;
    for (const auto& o : opps) {
        if (!cfg.in_fov(o.x, o.y)) {
            if (skipped_out_of_fov) ++*skipped_out_of_fov;
            continue;
        }
        Keypoint kp;
        kp.pi = cfg.px_i(o.x);
        kp.pj = cfg.px_j(o.y);
        kp.amp[0] = 1.0;
        kp.amp[1] = o.v_x;
        kp.amp[2] = o.v_y;
        kp.amp[3] = o.theta;
        kp.gi.resize(cfg.k);
        kp.gj.resize(cfg.k);
        const double inv2s2 = 1.0 / (2.0 * cfg.sigma_gt * cfg.sigma_gt);
        for (int i = 0; i < cfg.k; ++i) {
            const double di = (i + 0.5) - kp.pi;
            kp.gi[i] = std::exp(-di * di * inv2s2);
        }
        for (int j = 0; j < cfg.k; ++j) {
            const double dj = (j + 0.5) - kp.pj;
            kp.gj[j] = std::exp(-dj * dj * inv2s2);
        }
        kps.push_back(std::move(kp));
    }
    if (kps.empty()) return maps;

    for (int i = 0; i < cfg.k; ++i) {
        for (int j = 0; j < cfg.k; ++j) {
            // Nearest keypoint owns the cell.
            std::size_t best = 0;
            double best_d2 = std::numeric_limits<double>::infinity();
            for (std::size_t n = 0; n < kps.size(); ++n) {
                const double di = (i + 0.5) - kps[n].pi;
                const double dj = (j + 0.5) - kps[n].pj;
                const double d2 = di * di + dj * dj;
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = n;
                }
            }
            const Keypoint& kp = kps[best];
            const double g = kp.gi[i] * kp.gj[j];
            const std::size_t c = maps.idx(i, j);
            maps.pos[c] = std::clamp(kp.amp[0] * g, 0.0, 1.0);
            maps.v_x[c] = kp.amp[1] * g;
            maps.v_y[c] = kp.amp[2] * g;
            maps.yaw[c] = kp.amp[3] * g;
        }
    }

    // The keypoint cell carries the amplitude itself, so peak-cell readout of
    // the regression channels is exact.
    for (const auto& kp : kps) {
        const int i = static_cast<int>(std::floor(kp.pi));
        const int j = static_cast<int>(std::floor(kp.pj));
        const std::size_t c = maps.idx(i, j);
        maps.pos[c] = std::clamp(kp.amp[0], 0.0, 1.0);
        maps.v_x[c] = kp.amp[1];
        maps.v_y[c] = kp.amp[2];
        maps.yaw[c] = kp.amp[3];
    }
    return maps;
}

namespace detail {

inline void mirror_rows_j(std::vector<double>& plane, int k) {
    for (int i = 0; i < k; ++i) {
        double* row = plane.data() + static_cast<std::size_t>(i) * k;
        std::reverse(row, row + k);
    }
}

}  // namespace detail

struct FlipResult {
    BevInput input;
    HeatmapSet targets;
    std::vector<OppState> opps;
};

// Mirror across the y = 0 grid line (j -> k-1-j). The lateral velocity and
// yaw channels change sign along with the mirrored states.
inline FlipResult flip_x(const BevInput& input, const HeatmapSet& targets,
                         const std::vector<OppState>& opps) {
    FlipResult out{input, targets, opps};
    const int k = input.k;
    const std::size_t plane = static_cast<std::size_t>(k) * k;
    for (int c = 0; c < BevInput::kChannels; ++c) {
        std::vector<double> tmp(out.input.channel(c), out.input.channel(c) + plane);
        detail::mirror_rows_j(tmp, k);
        std::copy(tmp.begin(), tmp.end(), out.input.channel(c));
    }
    detail::mirror_rows_j(out.targets.pos, k);
    detail::mirror_rows_j(out.targets.v_x, k);
    detail::mirror_rows_j(out.targets.v_y, k);
    detail::mirror_rows_j(out.targets.yaw, k);
    for (auto& v : out.targets.v_y) v = -v;
    for (auto& v : out.targets.yaw) v = -v;
    for (auto& o : out.opps) {
        o.y = -o.y;
        o.v_y = -o.v_y;
        o.theta = wrap_angle(-o.theta);
    }
    return out;
}

// Rotates the sparse points (and the states) about the origin before any
// rasterization, so the augmentation is alias-free.
inline void rotate_scan(LidarScan& scan, std::vector<OppState>& opps, double phi) {
    for (auto& a : scan.angles) a = wrap_angle(a + phi);
    for (auto& o : opps) {
        const Vec2 p = tcs::rotate({o.x, o.y}, phi);
        const Vec2 v = tcs::rotate({o.v_x, o.v_y}, phi);
        o.x = p.x;
        o.y = p.y;
        o.v_x = v.x;
        o.v_y = v.y;
        o.theta = wrap_angle(o.theta + phi);
    }
}

// Speed augmentation: stack frames t-2 and t and double the velocity labels.
inline std::vector<OppState> double_velocities(std::vector<OppState> opps) {
    for (auto& o : opps) {
        o.v_x *= 2.0;
        o.v_y *= 2.0;
    }
    return opps;
}

struct FramePair {
    BevInput input;
    std::vector<OppState> opps;
};

// Builds the model input from frames t-2 and t of a scan sequence. The
// apparent displacement spans two ticks, so the velocity labels double.
inline FramePair frame_skip(const std::vector<LidarScan>& sequence,
                            const std::vector<OppState>& opps_at_t, std::size_t t,
                            const BevConfig& cfg) {
    if (t < 2 || t >= sequence.size()) {
        throw IndexOutOfRange("frame_skip: need frames t-2 and t in sequence");
    }
    FramePair fp;
    fp.input = stack(rasterize(sequence[t - 2], cfg), rasterize(sequence[t], cfg));
    fp.opps = double_velocities(opps_at_t);
    return fp;
}

}  // namespace tcs
