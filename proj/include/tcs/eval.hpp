#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "tcs/abd.hpp"
#include "tcs/dataset_io.hpp"
#include "tcs/decode.hpp"
#include "tcs/frenet.hpp"
#include "tcs/model.hpp"
#include "tcs/quant.hpp"
#include "tcs/track.hpp"

namespace tcs {

// Root mean squared error, exactly sqrt(mean of squared differences).
inline double rmse(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.size() != yhat.size()) throw LengthMismatch("rmse: series lengths differ");
    if (y.empty()) throw EmptyInput("rmse: empty series");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - yhat[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(y.size()));
}

struct MatchedPair {
    Detection det;  // ego-local
    OppState gt;    // ego-local
};

// Mean Euclidean translation / velocity errors over matched pairs.
inline std::pair<double, double> mate_mave(const std::vector<MatchedPair>& pairs) {
    if (pairs.empty()) throw NoMatches("mate_mave: no matched pairs");
    double te = 0.0, ve = 0.0;
    for (const auto& p : pairs) {
        te += std::hypot(p.det.x - p.gt.x, p.det.y - p.gt.y);
        ve += std::hypot(p.det.v_x - p.gt.v_x, p.det.v_y - p.gt.v_y);
    }
    return {te / pairs.size(), ve / pairs.size()};
}

// Builds a reference line from the ego trajectory of a sequence (the ego
// drives the scenario centerline). Extended past the final pose so that
// detections ahead of the ego still project onto a real segment.
inline ReferenceLine reference_from_ego(const std::vector<DatasetRecord>& seq,
                                        double min_spacing = 0.05,
                                        double forward_extension = 8.0) {
    std::vector<Vec2> pts;
    for (const auto& rec : seq) {
        const Vec2 p{rec.ego.x, rec.ego.y};
        if (pts.empty() || (p - pts.back()).norm() >= min_spacing) pts.push_back(p);
    }
    if (pts.size() < 2) {
        // Parked ego: straight ray along its heading.
        const EgoState& e = seq.front().ego;
        const Vec2 dir{std::cos(e.theta), std::sin(e.theta)};
        return ReferenceLine({{e.x, e.y}, Vec2{e.x, e.y} + dir * (forward_extension + 12.0)});
    }
    const Vec2 dir = pts[pts.size() - 1] - pts[pts.size() - 2];
    const double n = dir.norm();
    pts.push_back(pts.back() + Vec2{dir.x / n, dir.y / n} * forward_extension);
    return ReferenceLine(std::move(pts));
}

enum class DetectorKind { NnFloat, NnQuant, Abd };

inline std::string detector_name(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::NnFloat:
        case DetectorKind::NnQuant: return "nn";
        case DetectorKind::Abd: return "abd";
    }
    return "?";
}

struct EvalReport {
    std::string method;
    bool quantized = false;
    bool tracking = false;
    bool has_velocity = true;

    double rmse_s = 0.0, rmse_d = 0.0, rmse_vs = 0.0, rmse_vd = 0.0;
    double std_s = 0.0, std_d = 0.0, std_vs = 0.0, std_vd = 0.0;
    double mate = std::numeric_limits<double>::quiet_NaN();
    double mave = std::numeric_limits<double>::quiet_NaN();
    long detections = 0;
    long missed = 0;
    long false_dets = 0;
    // Missed counts per ground-truth object index (multi-opponent analysis).
    std::vector<long> visible_per_object;
    std::vector<long> missed_per_object;

    double infer_ms_mean = 0.0, infer_ms_std = 0.0;
    double pipeline_ms_mean = 0.0, pipeline_ms_std = 0.0;
    double improvement_pct = std::numeric_limits<double>::quiet_NaN();
};

struct HarnessConfig {
    BevConfig bev;
    DecodeConfig decode;
    AbdConfig abd;
    KfConfig kf;           // fuse_velocity is set per detector kind
    double match_gate = 1.0;
    double frenet_d_max = 5.0;
};

namespace detail {

struct ErrorSeries {
    std::vector<double> s, d, vs, vd;        // signed errors
    std::vector<double> infer_ms, pipe_ms;
    std::vector<MatchedPair> pairs;
    long missed = 0, false_dets = 0;
    std::vector<long> visible_per_object, missed_per_object;
};

inline double std_of_abs(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += std::abs(x);
    mean /= xs.size();
    double var = 0.0;
    for (double x : xs) {
        const double d = std::abs(x) - mean;
        var += d * d;
    }
    return std::sqrt(var / xs.size());
}

inline double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double m = 0.0;
    for (double x : xs) m += x;
    return m / xs.size();
}

inline double std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double var = 0.0;
    for (double x : xs) var += (x - m) * (x - m);
    return std::sqrt(var / xs.size());
}

}  // namespace detail

// Runs one detector row over the whole dataset. The same frame stream feeds
// every row; frames pair (t-1, t) within each sequence.
inline EvalReport evaluate_detector(const Dataset& ds, DetectorKind kind, bool tracking,
                                    TcsModel* nn, const QuantModel* qnn,
                                    const HarnessConfig& cfg,
                                    const std::vector<ReferenceLine>& refs) {
    if (refs.size() != ds.sequences.size()) {
        throw LengthMismatch("evaluate_detector: one reference line per sequence required");
    }
    if ((kind == DetectorKind::NnFloat && !nn) || (kind == DetectorKind::NnQuant && !qnn)) {
        throw EmptyInput("evaluate_detector: detector model missing");
    }

    using clock = std::chrono::steady_clock;
    detail::ErrorSeries es;
    const bool velocity_from_detector = kind != DetectorKind::Abd;
    const bool has_velocity = velocity_from_detector || tracking;
    const int k = cfg.bev.k;

    for (std::size_t si = 0; si < ds.sequences.size(); ++si) {
        const auto& seq = ds.sequences[si];
        const ReferenceLine& ref = refs[si];
        if (seq.size() < 2) continue;

        KfConfig kf = cfg.kf;
        kf.fuse_velocity = velocity_from_detector;
        Tracker tracker(kf);

        BevFrame prev_frame = rasterize(seq[0].scan(ds.lidar), cfg.bev);
        for (std::size_t t = 1; t < seq.size(); ++t) {
            const DatasetRecord& rec = seq[t];
            const LidarScan scan = rec.scan(ds.lidar);

            const auto pipe_start = clock::now();
            std::vector<Detection> dets;
            double infer_ms = 0.0;
            if (kind == DetectorKind::Abd) {
                const auto t0 = clock::now();
                dets = abd_detect(scan, cfg.abd);
                infer_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
                // Keep the comparison region identical for every method.
                std::erase_if(dets, [&](const Detection& d) { return !cfg.bev.in_fov(d.x, d.y); });
            } else {
                BevFrame curr = rasterize(scan, cfg.bev);
                const BevInput input = stack(prev_frame, curr);
                prev_frame = std::move(curr);
                if (kind == DetectorKind::NnFloat) {
                    Tensor x({1, 6, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
                    std::copy(input.channels.begin(), input.channels.end(), x.data.begin());
                    const auto t0 = clock::now();
                    Tensor out = nn->forward(x, false);
                    infer_ms =
                        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
                    HeatmapSet maps(k);
                    const std::size_t plane = static_cast<std::size_t>(k) * k;
                    std::copy_n(out.data.begin(), plane, maps.pos.begin());
                    std::copy_n(out.data.begin() + plane, plane, maps.v_x.begin());
                    std::copy_n(out.data.begin() + 2 * plane, plane, maps.v_y.begin());
                    std::copy_n(out.data.begin() + 3 * plane, plane, maps.yaw.begin());
                    dets = decode(maps, cfg.decode, cfg.bev);
                } else {
                    const auto t0 = clock::now();
                    const HeatmapSet maps = quantized_forward(*qnn, input);
                    infer_ms =
                        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
                    dets = decode(maps, cfg.decode, cfg.bev);
                }
            }
            std::vector<Detection> eval_dets = dets;
            if (tracking) {
                tracker.step(dets, rec.t);
                eval_dets = tracker.detections();
            }
            const double pipe_ms =
                std::chrono::duration<double, std::milli>(clock::now() - pipe_start).count();

            // Ground truth restricted to the BEV field of view.
            std::vector<OppState> gts;
            std::vector<std::size_t> gt_index;
            for (std::size_t g = 0; g < rec.opps.size(); ++g) {
                const OppState local = global_to_local(rec.opps[g], rec.ego);
                if (cfg.bev.in_fov(local.x, local.y)) {
                    gts.push_back(local);
                    gt_index.push_back(g);
                }
            }
            if (es.visible_per_object.size() < rec.opps.size()) {
                es.visible_per_object.resize(rec.opps.size(), 0);
                es.missed_per_object.resize(rec.opps.size(), 0);
            }
            for (std::size_t g : gt_index) es.visible_per_object[g] += 1;

            const MatchResult assoc = match(eval_dets, gts, cfg.match_gate);
            es.missed += static_cast<long>(assoc.unmatched_gts.size());
            for (int ug : assoc.unmatched_gts) es.missed_per_object[gt_index[ug]] += 1;
            es.false_dets += static_cast<long>(assoc.unmatched_dets.size());

            const EgoState& ego = rec.ego;
            for (const auto& [di, gi] : assoc.pairs) {
                const Detection& det = eval_dets[di];
                const OppState& gt_local = gts[gi];
                es.pairs.push_back({det, gt_local});

                const OppState det_global = local_to_global(
                    {det.x, det.y, det.v_x, det.v_y, det.theta}, ego);
                const OppState gt_global = rec.opps[gt_index[gi]];
                try {
                    const FrenetState fd = cartesian_to_frenet(
                        det_global.x, det_global.y, det_global.v_x, det_global.v_y, ref,
                        cfg.frenet_d_max);
                    const FrenetState fg = cartesian_to_frenet(
                        gt_global.x, gt_global.y, gt_global.v_x, gt_global.v_y, ref,
                        cfg.frenet_d_max);
                    es.s.push_back(fd.s - fg.s);
                    es.d.push_back(fd.d - fg.d);
                    if (has_velocity) {
                        es.vs.push_back(fd.v_s - fg.v_s);
                        es.vd.push_back(fd.v_d - fg.v_d);
                    }
                } catch (const PointTooFar&) {
                    // Matched pair outside the reference corridor; skip.
                }
            }
            es.infer_ms.push_back(infer_ms);
            es.pipe_ms.push_back(pipe_ms);
        }
    }

    EvalReport rep;
    rep.method = detector_name(kind);
    rep.quantized = kind == DetectorKind::NnQuant;
    rep.tracking = tracking;
    rep.has_velocity = has_velocity;
    const std::vector<double> zeros(es.s.size(), 0.0);
    if (!es.s.empty()) {
        rep.rmse_s = rmse(es.s, zeros);
        rep.rmse_d = rmse(es.d, zeros);
        rep.std_s = detail::std_of_abs(es.s);
        rep.std_d = detail::std_of_abs(es.d);
    }
    if (has_velocity && !es.vs.empty()) {
        const std::vector<double> vzeros(es.vs.size(), 0.0);
        rep.rmse_vs = rmse(es.vs, vzeros);
        rep.rmse_vd = rmse(es.vd, vzeros);
        rep.std_vs = detail::std_of_abs(es.vs);
        rep.std_vd = detail::std_of_abs(es.vd);
    }
    if (!es.pairs.empty()) {
        if (has_velocity) {
            std::tie(rep.mate, rep.mave) = mate_mave(es.pairs);
        } else {
            double te = 0.0;
            for (const auto& p : es.pairs) te += std::hypot(p.det.x - p.gt.x, p.det.y - p.gt.y);
            rep.mate = te / es.pairs.size();
        }
    }
    rep.detections = static_cast<long>(es.pairs.size());
    rep.missed = es.missed;
    rep.false_dets = es.false_dets;
    rep.visible_per_object = es.visible_per_object;
    rep.missed_per_object = es.missed_per_object;
    rep.infer_ms_mean = detail::mean_of(es.infer_ms);
    rep.infer_ms_std = detail::std_of(es.infer_ms);
    rep.pipeline_ms_mean = detail::mean_of(es.pipe_ms);
    rep.pipeline_ms_std = detail::std_of(es.pipe_ms);
    return rep;
}

// Runs every requested detector row over the identical frame stream, then
// fills in the percentage improvement of each NN row against the ABD row
// with the same tracking setting.
inline std::vector<EvalReport> run_comparison(const Dataset& ds, TcsModel* nn,
                                              const QuantModel* qnn, bool with_abd,
                                              bool with_tracking_rows,
                                              const HarnessConfig& cfg,
                                              const std::vector<ReferenceLine>& refs) {
    std::vector<EvalReport> rows;
    std::vector<bool> tracking_settings = {false};
    if (with_tracking_rows) tracking_settings.push_back(true);
    for (bool tracking : tracking_settings) {
        if (with_abd) {
            rows.push_back(evaluate_detector(ds, DetectorKind::Abd, tracking, nullptr,
                                             nullptr, cfg, refs));
        }
        if (nn) {
            rows.push_back(
                evaluate_detector(ds, DetectorKind::NnFloat, tracking, nn, nullptr, cfg, refs));
        }
        if (qnn) {
            rows.push_back(
                evaluate_detector(ds, DetectorKind::NnQuant, tracking, nullptr, qnn, cfg, refs));
        }
    }

    for (auto& row : rows) {
        if (row.method != "nn") continue;
        const EvalReport* abd_row = nullptr;
        for (const auto& r : rows) {
            if (r.method == "abd" && r.tracking == row.tracking) abd_row = &r;
        }
        if (!abd_row) continue;
        double sum = 0.0;
        int count = 0;
        auto add = [&](double base, double value) {
            if (base > 0.0 && std::isfinite(base) && std::isfinite(value)) {
                sum += (base - value) / base * 100.0;
                ++count;
            }
        };
        add(abd_row->rmse_s, row.rmse_s);
        add(abd_row->std_s, row.std_s);
        add(abd_row->rmse_d, row.rmse_d);
        add(abd_row->std_d, row.std_d);
        if (abd_row->has_velocity && row.has_velocity) {
            add(abd_row->rmse_vs, row.rmse_vs);
            add(abd_row->std_vs, row.std_vs);
            add(abd_row->rmse_vd, row.rmse_vd);
            add(abd_row->std_vd, row.std_vd);
        }
        if (count > 0) row.improvement_pct = sum / count;
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Report serialization. The main CSV carries only deterministic metric
// columns; latency and count diagnostics go to the companion details CSV.

namespace detail {

inline std::string fmt_metric(double v) {
    if (!std::isfinite(v)) return "-";
    std::ostringstream os;
    os << std::setprecision(9) << v;
    return os.str();
}

}  // namespace detail

inline std::string report_csv(const std::vector<EvalReport>& rows) {
    std::ostringstream os;
    os << "method,quant,tracking,mu_s,sigma_s,mu_d,sigma_d,mu_vs,sigma_vs,mu_vd,sigma_vd,"
          "improvement_pct\n";
    for (const auto& r : rows) {
        os << r.method << ',' << (r.method == "abd" ? "-" : (r.quantized ? "yes" : "no")) << ','
           << (r.tracking ? "yes" : "no") << ',' << detail::fmt_metric(r.rmse_s) << ','
           << detail::fmt_metric(r.std_s) << ',' << detail::fmt_metric(r.rmse_d) << ','
           << detail::fmt_metric(r.std_d) << ',';
        if (r.has_velocity) {
            os << detail::fmt_metric(r.rmse_vs) << ',' << detail::fmt_metric(r.std_vs) << ','
               << detail::fmt_metric(r.rmse_vd) << ',' << detail::fmt_metric(r.std_vd);
        } else {
            os << "-,-,-,-";
        }
        os << ',' << detail::fmt_metric(r.improvement_pct) << '\n';
    }
    return os.str();
}

inline std::string report_details_csv(const std::vector<EvalReport>& rows) {
    std::ostringstream os;
    os << "method,quant,tracking,mate,mave,detections,missed,false_detections,"
          "infer_ms_mean,infer_ms_std,pipeline_ms_mean,pipeline_ms_std\n";
    for (const auto& r : rows) {
        os << r.method << ',' << (r.method == "abd" ? "-" : (r.quantized ? "yes" : "no")) << ','
           << (r.tracking ? "yes" : "no") << ',' << detail::fmt_metric(r.mate) << ','
           << detail::fmt_metric(r.mave) << ',' << r.detections << ',' << r.missed << ','
           << r.false_dets << ',' << detail::fmt_metric(r.infer_ms_mean) << ','
           << detail::fmt_metric(r.infer_ms_std) << ',' << detail::fmt_metric(r.pipeline_ms_mean)
           << ',' << detail::fmt_metric(r.pipeline_ms_std) << '\n';
    }
    return os.str();
}

inline std::string report_table(const std::vector<EvalReport>& rows) {
    std::ostringstream os;
    auto cell = [](const std::string& s, int w) {
        std::ostringstream c;
        c << std::setw(w) << s;
        return c.str();
    };
    auto num = [&](double v, bool avail) {
        if (!avail || !std::isfinite(v)) return cell("-", 8);
        std::ostringstream c;
        c << std::fixed << std::setprecision(3) << v;
        return cell(c.str(), 8);
    };
    os << cell("method", 8) << cell("quant", 7) << cell("track", 7) << cell("mu_s", 8)
       << cell("sg_s", 8) << cell("mu_d", 8) << cell("sg_d", 8) << cell("mu_vs", 8)
       << cell("sg_vs", 8) << cell("mu_vd", 8) << cell("sg_vd", 8) << cell("improve%", 10)
       << '\n';
    for (const auto& r : rows) {
        os << cell(r.method, 8) << cell(r.method == "abd" ? "-" : (r.quantized ? "yes" : "no"), 7)
           << cell(r.tracking ? "yes" : "no", 7) << num(r.rmse_s, true) << num(r.std_s, true)
           << num(r.rmse_d, true) << num(r.std_d, true) << num(r.rmse_vs, r.has_velocity)
           << num(r.std_vs, r.has_velocity) << num(r.rmse_vd, r.has_velocity)
           << num(r.std_vd, r.has_velocity)
           << (std::isfinite(r.improvement_pct)
                   ? cell([&] {
                         std::ostringstream c;
                         c << std::fixed << std::setprecision(2) << r.improvement_pct;
                         return c.str();
                     }(), 10)
                   : cell("-", 10))
           << '\n';
    }
    return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw IoError("write_text_file: cannot open " + path);
    os << content;
    if (!os) throw IoError("write_text_file: write failed for " + path);
}

}  // namespace tcs
