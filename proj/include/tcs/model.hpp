#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tcs/adam.hpp"
#include "tcs/bev.hpp"
#include "tcs/checkpoint.hpp"
#include "tcs/layers.hpp"

namespace tcs {

enum class WeightFn { X, X2, X3, Sqrt, Zero };

inline double apply_weight_fn(WeightFn f, double h) {
    switch (f) {
        case WeightFn::X: return h;
        case WeightFn::X2: return h * h;
        case WeightFn::X3: return h * h * h;
        case WeightFn::Sqrt: return std::sqrt(std::max(h, 0.0));
        case WeightFn::Zero: return 0.0;
    }
    return 0.0;
}

inline std::string weight_fn_name(WeightFn f) {
    switch (f) {
        case WeightFn::X: return "x";
        case WeightFn::X2: return "x^2";
        case WeightFn::X3: return "x^3";
        case WeightFn::Sqrt: return "sqrt(x)";
        case WeightFn::Zero: return "0";
    }
    return "x";
}

inline WeightFn parse_weight_fn(const std::string& s) {
    if (s == "x") return WeightFn::X;
    if (s == "x2" || s == "x^2") return WeightFn::X2;
    if (s == "x3" || s == "x^3") return WeightFn::X3;
    if (s == "sqrt" || s == "sqrt(x)" || s == "sqrtx") return WeightFn::Sqrt;
    if (s == "0" || s == "zero") return WeightFn::Zero;
    throw OutOfRange("unknown weight function: " + s);
}

struct LossConfig {
    double alpha = 0.99;
    WeightFn weight_fn = WeightFn::X;

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0) throw OutOfRange("LossConfig: alpha must be in [0, 1]");
    }
};

// Weighted squared-error heatmap loss: sum over cells of
// (1 + f(h)) * (h - hhat)^2, with the weight evaluated on the target values.
inline double heatmap_loss(const std::vector<double>& target,
                           const std::vector<double>& pred, WeightFn f) {
    if (target.size() != pred.size()) throw ShapeMismatch("heatmap_loss: size mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = target[i] - pred[i];
        loss += (1.0 + apply_weight_fn(f, target[i])) * d * d;
    }
    return loss;
}

// Position channel weighted by alpha against the combined velocity and yaw
// channels.
inline double total_loss(const HeatmapSet& target, const HeatmapSet& pred,
                         const LossConfig& cfg) {
    cfg.validate();
    if (target.k != pred.k) throw ShapeMismatch("total_loss: heatmap sizes differ");
    const double l_pos = heatmap_loss(target.pos, pred.pos, cfg.weight_fn);
    const double l_rest = heatmap_loss(target.v_x, pred.v_x, cfg.weight_fn) +
                          heatmap_loss(target.v_y, pred.v_y, cfg.weight_fn) +
                          heatmap_loss(target.yaw, pred.yaw, cfg.weight_fn);
    return cfg.alpha * l_pos + (1.0 - cfg.alpha) * l_rest;
}

struct ModelConfig {
    int k = 64;
    int c1 = 16;  // encoder width after the first stride-2 stage
    int c2 = 32;  // bottleneck width
    bool residual = true;    // enc1 -> dec1 skip via 1x1 projection
    bool input_skip = false; // input -> output skip via 1x1 projection
};

// Hourglass heatmap network: two stride-2 conv+BN+ReLU encoder stages, two
// stride-2 transposed-conv decoder stages back to full resolution, four
// output channels. ReLU on the position channel only; velocity and yaw
// outputs stay signed.
struct TcsModel {
    ModelConfig cfg;
    Conv2d enc1, enc2;
    BatchNorm2d bn1, bn2;
    TConv2d dec1, dec2;
    PointwiseConv skip1, skip2;
    Relu relu1, relu2, relu3;

    bool has_cache = false;

    TcsModel() = default;
    explicit TcsModel(const ModelConfig& c, uint64_t seed = 1)
        : cfg(c),
          enc1(6, c.c1),
          enc2(c.c1, c.c2),
          bn1(c.c1),
          bn2(c.c2),
          dec1(c.c2, c.c1),
          dec2(c.c1, 4),
          skip1(c.c1, c.c1),
          skip2(6, 4) {
        Rng rng(seed);
        enc1.init(rng);
        enc2.init(rng);
        dec1.init(rng);
        dec2.init(rng);
        skip1.init(rng);
        skip2.init(rng);
    }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps = {&enc1.weight, &enc1.bias, &bn1.gamma, &bn1.beta,
                                   &enc2.weight, &enc2.bias, &bn2.gamma, &bn2.beta,
                                   &dec1.weight, &dec1.bias, &dec2.weight, &dec2.bias};
        if (cfg.residual) {
            ps.push_back(&skip1.weight);
            ps.push_back(&skip1.bias);
        }
        if (cfg.input_skip) {
            ps.push_back(&skip2.weight);
            ps.push_back(&skip2.bias);
        }
        return ps;
    }

    void zero_grad() {
        for (Tensor* p : parameters()) p->zero_grad();
    }

    // x: (N, 6, k, k) -> (N, 4, k, k). In eval mode the position channel is
    // clamped non-negative (it reads as a spatial probability); training
    // regresses the linear head so that zero-target cells keep a gradient.
    // Optional trace pointers receive the intermediate activations (used by
    // quantization calibration).
    Tensor forward(const Tensor& x, bool train, Tensor* a1_out = nullptr,
                   Tensor* a2_out = nullptr, Tensor* h_out = nullptr) {
        if (x.shape.size() != 4 || x.shape[1] != 6 ||
            x.shape[2] != static_cast<std::size_t>(cfg.k) ||
            x.shape[3] != static_cast<std::size_t>(cfg.k)) {
            throw ShapeMismatch("TcsModel: expected (N, 6, k, k) input");
        }
        Tensor a1 = relu1.forward(bn1.forward(enc1.forward(x, train), train), train);
        Tensor a2 = relu2.forward(bn2.forward(enc2.forward(a1, train), train), train);
        Tensor d1 = dec1.forward(a2, train);
        if (cfg.residual) {
            const Tensor s = skip1.forward(a1, train);
            for (std::size_t i = 0; i < d1.numel(); ++i) d1.data[i] += s.data[i];
        }
        Tensor h = relu3.forward(d1, train);
        Tensor out = dec2.forward(h, train);
        if (cfg.input_skip) {
            const Tensor s = skip2.forward(x, train);
            for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += s.data[i];
        }
        if (!train) {
            const std::size_t N = out.shape[0], plane = out.shape[2] * out.shape[3];
            for (std::size_t n = 0; n < N; ++n) {
                double* pos = out.data.data() + n * 4 * plane;
                for (std::size_t i = 0; i < plane; ++i) pos[i] = std::max(pos[i], 0.0);
            }
        }
        has_cache = train;
        if (a1_out) *a1_out = std::move(a1);
        if (a2_out) *a2_out = std::move(a2);
        if (h_out) *h_out = std::move(h);
        return out;
    }

    // Backward from the output gradient; accumulates parameter gradients.
    void backward(Tensor gy) {
        if (!has_cache) throw MissingForwardCache("TcsModel: backward without train forward");
        if (cfg.input_skip) skip2.backward(gy);
        Tensor gh = dec2.backward(gy);
        Tensor gd1 = relu3.backward(gh);
        Tensor ga2 = dec1.backward(gd1);
        Tensor ga1 = enc2.backward(bn2.backward(relu2.backward(ga2)));
        if (cfg.residual) {
            const Tensor gskip = skip1.backward(gd1);
            for (std::size_t i = 0; i < ga1.numel(); ++i) ga1.data[i] += gskip.data[i];
        }
        enc1.backward(bn1.backward(relu1.backward(ga1)));
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (Tensor* p : parameters()) n += p->numel();
        return n;
    }

    std::vector<std::pair<std::string, const Tensor*>> named_tensors() const {
        std::vector<std::pair<std::string, const Tensor*>> out = {
            {"enc1.weight", &enc1.weight}, {"enc1.bias", &enc1.bias},
            {"bn1.gamma", &bn1.gamma},     {"bn1.beta", &bn1.beta},
            {"enc2.weight", &enc2.weight}, {"enc2.bias", &enc2.bias},
            {"bn2.gamma", &bn2.gamma},     {"bn2.beta", &bn2.beta},
            {"dec1.weight", &dec1.weight}, {"dec1.bias", &dec1.bias},
            {"dec2.weight", &dec2.weight}, {"dec2.bias", &dec2.bias},
            {"skip1.weight", &skip1.weight}, {"skip1.bias", &skip1.bias},
            {"skip2.weight", &skip2.weight}, {"skip2.bias", &skip2.bias}};
        return out;
    }

    void save(const std::string& path) const {
        auto tensors = named_tensors();
        Tensor m({6});
        m.data = {static_cast<double>(cfg.k), static_cast<double>(cfg.c1),
                  static_cast<double>(cfg.c2), cfg.residual ? 1.0 : 0.0,
                  cfg.input_skip ? 1.0 : 0.0, 1.0};
        Tensor rm1({static_cast<std::size_t>(cfg.c1)}), rv1({static_cast<std::size_t>(cfg.c1)});
        Tensor rm2({static_cast<std::size_t>(cfg.c2)}), rv2({static_cast<std::size_t>(cfg.c2)});
        rm1.data = bn1.running_mean;
        rv1.data = bn1.running_var;
        rm2.data = bn2.running_mean;
        rv2.data = bn2.running_var;
        tensors.emplace_back("meta", &m);
        tensors.emplace_back("bn1.running_mean", &rm1);
        tensors.emplace_back("bn1.running_var", &rv1);
        tensors.emplace_back("bn2.running_mean", &rm2);
        tensors.emplace_back("bn2.running_var", &rv2);
        save_checkpoint(path, tensors);
    }

    static TcsModel load(const std::string& path) {
        auto tensors = load_checkpoint(path);
        const auto meta_it = tensors.find("meta");
        if (meta_it == tensors.end() || meta_it->second.numel() < 5) {
            throw SchemaError("TcsModel::load: missing meta record in " + path);
        }
        const auto& meta = meta_it->second.data;
        ModelConfig cfg;
        cfg.k = static_cast<int>(meta[0]);
        cfg.c1 = static_cast<int>(meta[1]);
        cfg.c2 = static_cast<int>(meta[2]);
        cfg.residual = meta[3] != 0.0;
        cfg.input_skip = meta[4] != 0.0;
        TcsModel model(cfg);
        auto fetch = [&](const std::string& name, Tensor& dst) {
            const auto it = tensors.find(name);
            if (it == tensors.end()) throw SchemaError("TcsModel::load: missing tensor " + name);
            if (it->second.numel() != dst.numel()) {
                throw SchemaError("TcsModel::load: shape mismatch for " + name);
            }
            dst.data = it->second.data;
        };
        fetch("enc1.weight", model.enc1.weight);
        fetch("enc1.bias", model.enc1.bias);
        fetch("bn1.gamma", model.bn1.gamma);
        fetch("bn1.beta", model.bn1.beta);
        fetch("enc2.weight", model.enc2.weight);
        fetch("enc2.bias", model.enc2.bias);
        fetch("bn2.gamma", model.bn2.gamma);
        fetch("bn2.beta", model.bn2.beta);
        fetch("dec1.weight", model.dec1.weight);
        fetch("dec1.bias", model.dec1.bias);
        fetch("dec2.weight", model.dec2.weight);
        fetch("dec2.bias", model.dec2.bias);
        fetch("skip1.weight", model.skip1.weight);
        fetch("skip1.bias", model.skip1.bias);
        fetch("skip2.weight", model.skip2.weight);
        fetch("skip2.bias", model.skip2.bias);
        auto fetch_vec = [&](const std::string& name, std::vector<double>& dst) {
            const auto it = tensors.find(name);
            if (it == tensors.end()) throw SchemaError("TcsModel::load: missing tensor " + name);
            dst = it->second.data;
        };
        fetch_vec("bn1.running_mean", model.bn1.running_mean);
        fetch_vec("bn1.running_var", model.bn1.running_var);
        fetch_vec("bn2.running_mean", model.bn2.running_mean);
        fetch_vec("bn2.running_var", model.bn2.running_var);
        return model;
    }
};

// Gradient of total_loss with respect to the prediction tensor (N, 4, k, k);
// targets laid out the same way. Returns the summed loss over the batch.
inline double total_loss_and_grad(const Tensor& target, const Tensor& pred,
                                  const LossConfig& cfg, Tensor& grad_out) {
    if (!target.same_shape(pred)) throw ShapeMismatch("total_loss_and_grad: shape mismatch");
    cfg.validate();
    grad_out = Tensor(pred.shape);
    const std::size_t N = pred.shape[0], plane = pred.shape[2] * pred.shape[3];
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < 4; ++c) {
            const double cw = (c == 0) ? cfg.alpha : (1.0 - cfg.alpha);
            const std::size_t base = (n * 4 + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double h = target.data[base + i];
                const double d = h - pred.data[base + i];
                const double w = 1.0 + apply_weight_fn(cfg.weight_fn, h);
                loss += cw * w * d * d;
                grad_out.data[base + i] = -2.0 * cw * w * d;
            }
        }
    }
    return loss;
}

}  // namespace tcs
