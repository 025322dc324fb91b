#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tcs/adam.hpp"
#include "tcs/bev.hpp"
#include "tcs/dataset_io.hpp"
#include "tcs/decode.hpp"
#include "tcs/eval.hpp"
#include "tcs/model.hpp"

namespace tcs {

struct TrainConfig {
    int batch_size = 32;
    int epochs = 100;
    double lr = 5e-5;
    bool aug_rot = true;
    bool aug_flip = true;
    bool aug_speed = true;
    uint64_t seed = 0;
    double val_fraction = 0.1;

    void validate() const {
        if (batch_size < 1) throw OutOfRange("TrainConfig: batch_size must be >= 1");
        if (epochs < 1) throw OutOfRange("TrainConfig: epochs must be >= 1");
        if (lr <= 0.0) throw OutOfRange("TrainConfig: lr must be positive");
    }
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_rmse_s = std::numeric_limits<double>::quiet_NaN();
    double val_rmse_d = std::numeric_limits<double>::quiet_NaN();
    double val_rmse_vs = std::numeric_limits<double>::quiet_NaN();
    double val_rmse_vd = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    TcsModel model;  // best-validation weights (final weights if no val split)
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val_score = std::numeric_limits<double>::infinity();
};

inline std::string metrics_csv(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os << "epoch,train_loss,val_rmse_s,val_rmse_d,val_rmse_vs,val_rmse_vd\n";
    os << std::setprecision(17);
    for (const auto& e : log) {
        os << e.epoch << ',' << e.train_loss << ',' << e.val_rmse_s << ',' << e.val_rmse_d
           << ',' << e.val_rmse_vs << ',' << e.val_rmse_vd << '\n';
    }
    return os.str();
}

namespace detail {

struct SampleRef {
    std::size_t seq = 0;
    std::size_t t = 0;  // current-frame index, >= 1
};

struct PreparedSample {
    BevInput input;
    HeatmapSet targets;
};

// Assembles one training sample: frame-skip decision, rotation on the sparse
// points, rasterization, target drawing, then the image-space flip.
inline PreparedSample prepare_sample(const std::vector<DatasetRecord>& seq, std::size_t t,
                                     bool skip, double phi, bool flip, const BevConfig& bev,
                                     const LidarSpec& lidar) {
    const std::size_t prev_idx = skip ? t - 2 : t - 1;
    LidarScan prev_scan = seq[prev_idx].scan(lidar);
    LidarScan curr_scan = seq[t].scan(lidar);

    std::vector<OppState> opps;
    for (const auto& o : seq[t].opps) opps.push_back(global_to_local(o, seq[t].ego));
    if (skip) opps = double_velocities(std::move(opps));

    if (phi != 0.0) {
        std::vector<OppState> none;
        rotate_scan(prev_scan, none, phi);
        rotate_scan(curr_scan, opps, phi);
    }

    PreparedSample s;
    s.input = stack(rasterize(prev_scan, bev), rasterize(curr_scan, bev));
    s.targets = make_targets(opps, bev);
    if (flip) {
        FlipResult f = flip_x(s.input, s.targets, opps);
        s.input = std::move(f.input);
        s.targets = std::move(f.targets);
    }
    return s;
}

inline void fill_batch_tensors(const std::vector<PreparedSample>& batch, int k,
                               Tensor& x, Tensor& y) {
    const std::size_t N = batch.size();
    const std::size_t plane = static_cast<std::size_t>(k) * k;
    x = Tensor({N, 6, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
    y = Tensor({N, 4, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
    for (std::size_t n = 0; n < N; ++n) {
        std::copy(batch[n].input.channels.begin(), batch[n].input.channels.end(),
                  x.data.begin() + n * 6 * plane);
        double* yp = y.data.data() + n * 4 * plane;
        std::copy(batch[n].targets.pos.begin(), batch[n].targets.pos.end(), yp);
        std::copy(batch[n].targets.v_x.begin(), batch[n].targets.v_x.end(), yp + plane);
        std::copy(batch[n].targets.v_y.begin(), batch[n].targets.v_y.end(), yp + 2 * plane);
        std::copy(batch[n].targets.yaw.begin(), batch[n].targets.yaw.end(), yp + 3 * plane);
    }
}

struct ValErrors {
    std::vector<double> s, d, vs, vd;
};

// Batched validation pass: plain (t-1, t) pairs, no augmentation; decoded
// detections are matched to ground truth and scored in the Frenet frame of
// the sequence's own ego trajectory.
inline ValErrors validate_model(TcsModel& model,
                                const std::vector<const std::vector<DatasetRecord>*>& val_seqs,
                                const std::vector<ReferenceLine>& refs, const Dataset& ds,
                                const BevConfig& bev, const DecodeConfig& dec_cfg,
                                double gate, int batch_size) {
    ValErrors errs;
    const int k = bev.k;
    const std::size_t plane = static_cast<std::size_t>(k) * k;
    for (std::size_t si = 0; si < val_seqs.size(); ++si) {
        const auto& seq = *val_seqs[si];
        if (seq.size() < 2) continue;
        std::vector<BevFrame> frames(seq.size());
        for (std::size_t t = 0; t < seq.size(); ++t) {
            frames[t] = rasterize(seq[t].scan(ds.lidar), bev);
        }
        for (std::size_t start = 1; start < seq.size();
             start += static_cast<std::size_t>(batch_size)) {
            const std::size_t end =
                std::min(seq.size(), start + static_cast<std::size_t>(batch_size));
            const std::size_t N = end - start;
            Tensor x({N, 6, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
            for (std::size_t n = 0; n < N; ++n) {
                const BevInput input = stack(frames[start + n - 1], frames[start + n]);
                std::copy(input.channels.begin(), input.channels.end(),
                          x.data.begin() + n * 6 * plane);
            }
            Tensor out = model.forward(x, false);
            for (std::size_t n = 0; n < N; ++n) {
                HeatmapSet maps(k);
                const double* op = out.data.data() + n * 4 * plane;
                std::copy_n(op, plane, maps.pos.begin());
                std::copy_n(op + plane, plane, maps.v_x.begin());
                std::copy_n(op + 2 * plane, plane, maps.v_y.begin());
                std::copy_n(op + 3 * plane, plane, maps.yaw.begin());
                const std::vector<Detection> dets = decode(maps, dec_cfg, bev);

                const DatasetRecord& rec = seq[start + n];
                std::vector<OppState> gts;
                std::vector<std::size_t> gt_index;
                for (std::size_t g = 0; g < rec.opps.size(); ++g) {
                    const OppState local = global_to_local(rec.opps[g], rec.ego);
                    if (bev.in_fov(local.x, local.y)) {
                        gts.push_back(local);
                        gt_index.push_back(g);
                    }
                }
                const MatchResult assoc = match(dets, gts, gate);
                for (const auto& [di, gi] : assoc.pairs) {
                    const Detection& det = dets[di];
                    const OppState dg = local_to_global(
                        {det.x, det.y, det.v_x, det.v_y, det.theta}, rec.ego);
                    const OppState& gg = rec.opps[gt_index[gi]];
                    try {
                        const FrenetState fd =
                            cartesian_to_frenet(dg.x, dg.y, dg.v_x, dg.v_y, refs[si]);
                        const FrenetState fg =
                            cartesian_to_frenet(gg.x, gg.y, gg.v_x, gg.v_y, refs[si]);
                        errs.s.push_back(fd.s - fg.s);
                        errs.d.push_back(fd.d - fg.d);
                        errs.vs.push_back(fd.v_s - fg.v_s);
                        errs.vd.push_back(fd.v_d - fg.v_d);
                    } catch (const PointTooFar&) {
                    }
                }
            }
        }
    }
    return errs;
}

inline double rmse_or_nan(const std::vector<double>& xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    for (double x : xs) acc += x * x;
    return std::sqrt(acc / xs.size());
}

}  // namespace detail

// Trains the heatmap network. Sequences are split 90/10 into train and
// validation by contiguous sequence; best-validation weights are returned.
inline TrainResult train(const Dataset& ds, const BevConfig& bev, const ModelConfig& mcfg,
                         const LossConfig& lcfg, const TrainConfig& tcfg) {
    tcfg.validate();
    lcfg.validate();
    bev.validate();
    if (ds.sequences.empty() || ds.record_count() == 0) {
        throw EmptyDataset("train: dataset has no records");
    }

    const std::size_t n_seq = ds.sequences.size();
    std::size_t n_val = 0;
    if (n_seq >= 2) {
        n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                             std::lround(tcfg.val_fraction * n_seq)));
        if (n_val >= n_seq) n_val = n_seq - 1;
    }
    const std::size_t n_train = n_seq - n_val;

    std::vector<detail::SampleRef> samples;
    for (std::size_t s = 0; s < n_train; ++s) {
        for (std::size_t t = 1; t < ds.sequences[s].size(); ++t) samples.push_back({s, t});
    }
    if (samples.empty()) throw EmptyDataset("train: no usable frame pairs");

    std::vector<const std::vector<DatasetRecord>*> val_seqs;
    std::vector<ReferenceLine> val_refs;
    for (std::size_t s = n_train; s < n_seq; ++s) {
        val_seqs.push_back(&ds.sequences[s]);
        val_refs.push_back(reference_from_ego(ds.sequences[s]));
    }

    TcsModel model(mcfg, tcfg.seed + 1);
    Adam opt;
    opt.lr = tcfg.lr;
    Rng master(tcfg.seed);
    const DecodeConfig dec_cfg;

    TrainResult result;
    result.model = model;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        Rng rng = master.fork(static_cast<uint64_t>(epoch));

        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        }

        double epoch_loss = 0.0;
        std::size_t epoch_samples = 0;
        for (std::size_t batch_start = 0; batch_start < order.size();
             batch_start += static_cast<std::size_t>(tcfg.batch_size)) {
            const std::size_t batch_end = std::min(
                order.size(), batch_start + static_cast<std::size_t>(tcfg.batch_size));
            std::vector<detail::PreparedSample> batch;
            std::vector<std::size_t> batch_ids;
            batch.reserve(batch_end - batch_start);
            for (std::size_t bi = batch_start; bi < batch_end; ++bi) {
                const detail::SampleRef& ref = samples[order[bi]];
                const bool can_skip = ref.t >= 2;
                const bool skip = tcfg.aug_speed && can_skip && rng.bernoulli(0.5);
                const bool do_rot = tcfg.aug_rot && rng.bernoulli(0.5);
                const double phi = do_rot ? rng.uniform(-kPi / 4.0, kPi / 4.0) : 0.0;
                const bool flip = tcfg.aug_flip && rng.bernoulli(0.5);
                batch.push_back(detail::prepare_sample(ds.sequences[ref.seq], ref.t, skip,
                                                       phi, flip, bev, ds.lidar));
                batch_ids.push_back(order[bi]);
            }
            Tensor x, y;
            detail::fill_batch_tensors(batch, bev.k, x, y);
            Tensor out = model.forward(x, true);
            Tensor grad;
            const double loss = total_loss_and_grad(y, out, lcfg, grad);
            if (!std::isfinite(loss)) {
                std::ostringstream diag;
                diag << "train: non-finite loss at epoch " << epoch << ", batch samples [";
                for (std::size_t i = 0; i < batch_ids.size(); ++i) {
                    diag << (i ? "," : "") << batch_ids[i];
                }
                diag << "], parameter norms [";
                for (Tensor* p : model.parameters()) {
                    double n2 = 0.0;
                    for (double v : p->data) n2 += v * v;
                    diag << ' ' << std::sqrt(n2);
                }
                diag << " ]";
                throw NonFiniteLoss(diag.str());
            }
            model.zero_grad();
            model.backward(grad);
            opt.step(model.parameters());
            epoch_loss += loss;
            epoch_samples += batch.size();
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = epoch_loss / static_cast<double>(epoch_samples);
        if (!val_seqs.empty()) {
            const detail::ValErrors errs = detail::validate_model(
                model, val_seqs, val_refs, ds, bev, dec_cfg, 1.0, tcfg.batch_size);
            log.val_rmse_s = detail::rmse_or_nan(errs.s);
            log.val_rmse_d = detail::rmse_or_nan(errs.d);
            log.val_rmse_vs = detail::rmse_or_nan(errs.vs);
            log.val_rmse_vd = detail::rmse_or_nan(errs.vd);
            const double score =
                log.val_rmse_s + log.val_rmse_d + log.val_rmse_vs + log.val_rmse_vd;
            if (std::isfinite(score) && score < result.best_val_score) {
                result.best_val_score = score;
                result.best_epoch = epoch;
                result.model = model;
            }
        }
        result.log.push_back(log);
    }
    if (result.best_epoch < 0) result.model = model;
    return result;
}

}  // namespace tcs
