#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "tcs/common.hpp"
#include "tcs/decode.hpp"
#include "tcs/geometry.hpp"

namespace tcs {

namespace detail {

template <int N>
using Mat = std::array<double, static_cast<std::size_t>(N) * N>;

template <int N>
inline Mat<N> mat_mul(const Mat<N>& a, const Mat<N>& b) {
    Mat<N> c{};
    for (int i = 0; i < N; ++i) {
        for (int k = 0; k < N; ++k) {
            const double v = a[i * N + k];
            for (int j = 0; j < N; ++j) c[i * N + j] += v * b[k * N + j];
        }
    }
    return c;
}

template <int N>
inline Mat<N> mat_transpose(const Mat<N>& a) {
    Mat<N> t{};
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) t[j * N + i] = a[i * N + j];
    }
    return t;
}

// Gauss-Jordan inverse with partial pivoting; fine for the small SPD
// innovation matrices used here.
template <int N>
inline Mat<N> mat_inverse(Mat<N> a) {
    Mat<N> inv{};
    for (int i = 0; i < N; ++i) inv[i * N + i] = 1.0;
    for (int col = 0; col < N; ++col) {
        int pivot = col;
        for (int r = col + 1; r < N; ++r) {
            if (std::abs(a[r * N + col]) > std::abs(a[pivot * N + col])) pivot = r;
        }
        if (std::abs(a[pivot * N + col]) < 1e-300) {
            throw Error("mat_inverse: singular matrix");
        }
        if (pivot != col) {
            for (int j = 0; j < N; ++j) {
                std::swap(a[col * N + j], a[pivot * N + j]);
                std::swap(inv[col * N + j], inv[pivot * N + j]);
            }
        }
        const double d = a[col * N + col];
        for (int j = 0; j < N; ++j) {
            a[col * N + j] /= d;
            inv[col * N + j] /= d;
        }
        for (int r = 0; r < N; ++r) {
            if (r == col) continue;
            const double f = a[r * N + col];
            if (f == 0.0) continue;
            for (int j = 0; j < N; ++j) {
                a[r * N + j] -= f * a[col * N + j];
                inv[r * N + j] -= f * inv[col * N + j];
            }
        }
    }
    return inv;
}

template <int N>
inline void mat_symmetrize(Mat<N>& a) {
    for (int i = 0; i < N; ++i) {
        for (int j = i + 1; j < N; ++j) {
            const double v = 0.5 * (a[i * N + j] + a[j * N + i]);
            a[i * N + j] = v;
            a[j * N + i] = v;
        }
    }
}

}  // namespace detail

struct KfConfig {
    double q_pos = 0.1;    // position diffusion density
    double q_vel = 1.0;    // white-acceleration density
    double r_pos = 0.05;   // position measurement std, m
    double r_vel = 0.3;    // velocity measurement std, m/s (fused in NN mode)
    double gate = 1.0;     // association gate, m
    int max_misses = 12;
    bool fuse_velocity = false;  // true when the detector supplies velocity

    void validate() const {
        if (q_pos <= 0.0 || q_vel <= 0.0 || r_pos <= 0.0 || r_vel <= 0.0 || gate <= 0.0 ||
            max_misses <= 0) {
            throw OutOfRange("KfConfig: all parameters must be positive");
        }
    }
};

// Constant-velocity track: state [x, y, v_x, v_y] with 4x4 covariance.
struct KfTrack {
    std::array<double, 4> state{};
    detail::Mat<4> cov{};
    double last_update = 0.0;
    int id = 0;
    int age = 0;
    int misses = 0;

    Vec2 position() const { return {state[0], state[1]}; }
    Vec2 velocity() const { return {state[2], state[3]}; }
};

inline KfTrack make_track(const Detection& det, double t, int id, const KfConfig& cfg) {
    KfTrack tr;
    tr.state = {det.x, det.y, cfg.fuse_velocity ? det.v_x : 0.0,
                cfg.fuse_velocity ? det.v_y : 0.0};
    tr.cov = {};
    tr.cov[0] = tr.cov[5] = cfg.r_pos * cfg.r_pos;
    tr.cov[10] = tr.cov[15] = cfg.fuse_velocity ? cfg.r_vel * cfg.r_vel : 1.0;
    tr.last_update = t;
    tr.id = id;
    return tr;
}

// Propagates the constant-velocity model by dt with white-acceleration
// process noise plus a small position diffusion term.
inline void predict(KfTrack& track, double dt, const KfConfig& cfg) {
    if (dt <= 0.0) throw NonPositiveDt("predict: dt must be positive");
    cfg.validate();
    detail::Mat<4> F{};
    for (int i = 0; i < 4; ++i) F[i * 4 + i] = 1.0;
    F[0 * 4 + 2] = dt;
    F[1 * 4 + 3] = dt;

    track.state[0] += track.state[2] * dt;
    track.state[1] += track.state[3] * dt;

    detail::Mat<4> Q{};
    const double dt2 = dt * dt, dt3 = dt2 * dt;
    for (int axis = 0; axis < 2; ++axis) {
        const int p = axis, v = axis + 2;
        Q[p * 4 + p] = cfg.q_pos * dt + cfg.q_vel * dt3 / 3.0;
        Q[p * 4 + v] = cfg.q_vel * dt2 / 2.0;
        Q[v * 4 + p] = cfg.q_vel * dt2 / 2.0;
        Q[v * 4 + v] = cfg.q_vel * dt;
    }
    const auto FP = detail::mat_mul<4>(F, track.cov);
    track.cov = detail::mat_mul<4>(FP, detail::mat_transpose<4>(F));
    for (std::size_t i = 0; i < Q.size(); ++i) track.cov[i] += Q[i];
    detail::mat_symmetrize<4>(track.cov);
}

namespace detail {

// Measurement update with H selecting the first m state entries.
template <int M>
inline void kf_update(KfTrack& track, const std::array<double, M>& z,
                      const std::array<double, M>& r_diag) {
    Mat<M> S{};
    std::array<double, 4 * M> PHt{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < M; ++j) PHt[i * M + j] = track.cov[i * 4 + j];
    }
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < M; ++j) S[i * M + j] = track.cov[i * 4 + j];
        S[i * M + i] += r_diag[i] * r_diag[i];
    }
    const Mat<M> Sinv = mat_inverse<M>(S);
    std::array<double, 4 * M> K{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < M; ++j) {
            double s = 0.0;
            for (int l = 0; l < M; ++l) s += PHt[i * M + l] * Sinv[l * M + j];
            K[i * M + j] = s;
        }
    }
    std::array<double, M> innov{};
    for (int j = 0; j < M; ++j) innov[j] = z[j] - track.state[j];
    for (int i = 0; i < 4; ++i) {
        double s = 0.0;
        for (int j = 0; j < M; ++j) s += K[i * M + j] * innov[j];
        track.state[i] += s;
    }
    // Joseph-free form; symmetrized afterwards to keep the covariance PSD.
    Mat<4> KH{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < M; ++j) KH[i * 4 + j] = K[i * M + j];
    }
    Mat<4> IKH{};
    for (int i = 0; i < 4; ++i) IKH[i * 4 + i] = 1.0;
    for (std::size_t i = 0; i < IKH.size(); ++i) IKH[i] -= KH[i];
    track.cov = mat_mul<4>(IKH, track.cov);
    mat_symmetrize<4>(track.cov);
}

}  // namespace detail

// Fuses one detection into the track. Position-only by default; with
// fuse_velocity the detector's velocity becomes part of the measurement.
inline void update(KfTrack& track, const Detection& det, const KfConfig& cfg) {
    cfg.validate();
    const double dist = std::hypot(det.x - track.state[0], det.y - track.state[1]);
    if (dist > cfg.gate) throw OutsideGate("update: detection outside association gate");
    if (cfg.fuse_velocity) {
        detail::kf_update<4>(track, {det.x, det.y, det.v_x, det.v_y},
                             {cfg.r_pos, cfg.r_pos, cfg.r_vel, cfg.r_vel});
    } else {
        detail::kf_update<2>(track, {det.x, det.y}, {cfg.r_pos, cfg.r_pos});
    }
    track.misses = 0;
}

// Track manager: predict, associate, update, spawn, retire.
class Tracker {
public:
    explicit Tracker(const KfConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

    const std::vector<KfTrack>& tracks() const { return tracks_; }
    const KfConfig& config() const { return cfg_; }

    void step(const std::vector<Detection>& dets, double t) {
        if (has_time_ && t <= last_t_) throw NonMonotoneTime("Tracker::step: time went backwards");
        const double dt = has_time_ ? t - last_t_ : 0.0;
        if (has_time_) {
            for (auto& tr : tracks_) predict(tr, dt, cfg_);
        }
        last_t_ = t;
        has_time_ = true;

        std::vector<Detection> predicted;
        predicted.reserve(tracks_.size());
        std::vector<OppState> gts;  // reuse greedy matcher: tracks act as references
        for (const auto& tr : tracks_) {
            gts.push_back({tr.state[0], tr.state[1], tr.state[2], tr.state[3], 0.0});
        }
        const MatchResult assoc = match(dets, gts, cfg_.gate);

        std::vector<char> det_used(dets.size(), 0);
        for (const auto& [d, g] : assoc.pairs) {
            update(tracks_[g], dets[d], cfg_);
            det_used[d] = 1;
        }
        for (int g : assoc.unmatched_gts) tracks_[g].misses += 1;
        for (auto& tr : tracks_) tr.age += 1;
        tracks_.erase(std::remove_if(tracks_.begin(), tracks_.end(),
                                     [&](const KfTrack& tr) {
                                         return tr.misses > cfg_.max_misses;
                                     }),
                      tracks_.end());
        for (std::size_t d = 0; d < dets.size(); ++d) {
            if (!det_used[d]) tracks_.push_back(make_track(dets[d], t, next_id_++, cfg_));
        }
    }

    // Current tracks rendered as detections (for the evaluation harness).
    std::vector<Detection> detections() const {
        std::vector<Detection> out;
        for (const auto& tr : tracks_) {
            if (tr.misses > 0) continue;  // only report freshly confirmed tracks
            Detection d;
            d.x = tr.state[0];
            d.y = tr.state[1];
            d.v_x = tr.state[2];
            d.v_y = tr.state[3];
            d.theta = std::atan2(tr.state[3], tr.state[2]);
            d.score = 1.0;
            out.push_back(d);
        }
        return out;
    }

private:
    KfConfig cfg_;
    std::vector<KfTrack> tracks_;
    int next_id_ = 1;
    double last_t_ = 0.0;
    bool has_time_ = false;
};

}  // namespace tcs
