#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tcs/bev.hpp"
#include "tcs/model.hpp"

namespace tcs {

// Affine quantization parameters for one tensor.
struct QuantParams {
    double scale = 1.0;
    int zero_point = 0;  // in [-128, 127]
    double observed_min = 0.0;
    double observed_max = 0.0;
};

inline QuantParams quant_params_from_range(double mn, double mx) {
    QuantParams qp;
    qp.observed_min = mn;
    qp.observed_max = mx;
    // The grid must contain an exact zero so that zero-valued activations
    // (padding, ReLU floors) quantize without bias.
    mn = std::min(mn, 0.0);
    mx = std::max(mx, 0.0);
    double scale = (mx - mn) / 255.0;
    if (scale < 1e-8) scale = 1e-8;  // degenerate (constant) activations
    qp.scale = scale;
    const double zp = std::round(-mn / scale) - 128.0;
    qp.zero_point = static_cast<int>(std::clamp(zp, -128.0, 127.0));
    return qp;
}

// Round half away from zero, the convention used throughout the INT8 path.
inline int8_t quantize_value(double x, const QuantParams& qp) {
    const double q = std::round(x / qp.scale) + qp.zero_point;
    return static_cast<int8_t>(std::clamp(q, -128.0, 127.0));
}

inline double dequantize_value(int8_t q, const QuantParams& qp) {
    return (static_cast<int>(q) - qp.zero_point) * qp.scale;
}

inline std::vector<int8_t> quantize_tensor(const std::vector<double>& x,
                                           const QuantParams& qp) {
    std::vector<int8_t> q(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) q[i] = quantize_value(x[i], qp);
    return q;
}

inline std::vector<double> dequantize_tensor(const std::vector<int8_t>& q,
                                             const QuantParams& qp) {
    std::vector<double> x(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) x[i] = dequantize_value(q[i], qp);
    return x;
}

// Per-activation calibration ranges observed over a representative set.
struct ActivationRanges {
    QuantParams input, act1, act2, act3;
    bool calibrated = false;
};

// Runs the float model over the calibration inputs and records min/max of
// every quantized activation tensor.
inline ActivationRanges calibrate(TcsModel& model, const std::vector<BevInput>& inputs) {
    if (inputs.size() < 16) {
        throw EmptyCalibrationSet("calibrate: need at least 16 calibration samples");
    }
    const int k = model.cfg.k;
    const std::size_t plane = static_cast<std::size_t>(k) * k;
    double mn[4], mx[4];
    for (int i = 0; i < 4; ++i) {
        mn[i] = std::numeric_limits<double>::infinity();
        mx[i] = -std::numeric_limits<double>::infinity();
    }
    auto track = [&](int slot, const Tensor& t) {
        for (double v : t.data) {
            mn[slot] = std::min(mn[slot], v);
            mx[slot] = std::max(mx[slot], v);
        }
    };
    for (const BevInput& in : inputs) {
        Tensor x({1, 6, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
        std::copy(in.channels.begin(), in.channels.end(), x.data.begin());
        (void)plane;
        Tensor a1, a2, h;
        model.forward(x, false, &a1, &a2, &h);
        track(0, x);
        track(1, a1);
        track(2, a2);
        track(3, h);
    }
    ActivationRanges r;
    r.input = quant_params_from_range(mn[0], mx[0]);
    r.act1 = quant_params_from_range(mn[1], mx[1]);
    r.act2 = quant_params_from_range(mn[2], mx[2]);
    r.act3 = quant_params_from_range(mn[3], mx[3]);
    r.calibrated = true;
    return r;
}

// One integer conv/deconv layer: symmetric per-output-channel INT8 weights,
// float bias (batchnorm already folded in).
struct QuantLayer {
    std::size_t in_ch = 0, out_ch = 0;
    bool transposed = false;
    std::vector<int8_t> weights;    // conv: (out,in,3,3); tconv: (in,out,3,3)
    std::vector<double> w_scales;   // per output channel
    std::vector<double> bias;       // per output channel
};

// Largest possible int32 accumulator magnitude for a 3x3 integer conv with
// the given fan-in; used to show 32-bit accumulation cannot overflow.
inline long long int32_accumulator_bound(std::size_t in_ch) {
    return static_cast<long long>(in_ch) * 9 * 127 * 255;
}

struct QuantModel {
    ModelConfig cfg;
    ActivationRanges act;
    QuantLayer enc1, enc2, dec1, dec2, skip1, skip2;
};

namespace detail {

inline QuantLayer quantize_layer(const Tensor& weight, const std::vector<double>& bias,
                                 std::size_t in_ch, std::size_t out_ch, bool transposed) {
    QuantLayer layer;
    layer.in_ch = in_ch;
    layer.out_ch = out_ch;
    layer.transposed = transposed;
    layer.bias = bias;
    layer.w_scales.assign(out_ch, 1e-8);
    const std::size_t taps = weight.numel() / (in_ch * out_ch);
    // Locate the per-output-channel slices in either layout.
    auto weight_at = [&](std::size_t oc, std::size_t ic, std::size_t tap) -> double {
        if (transposed) return weight.data[(ic * out_ch + oc) * taps + tap];
        return weight.data[(oc * in_ch + ic) * taps + tap];
    };
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        double mx = 0.0;
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            for (std::size_t t = 0; t < taps; ++t) {
                mx = std::max(mx, std::abs(weight_at(oc, ic, t)));
            }
        }
        layer.w_scales[oc] = std::max(mx / 127.0, 1e-8);
    }
    layer.weights.resize(weight.numel());
    for (std::size_t i = 0; i < weight.numel(); ++i) {
        std::size_t oc;
        if (transposed) {
            oc = (i / taps) % out_ch;
        } else {
            oc = i / (in_ch * taps);
        }
        const double q = std::round(weight.data[i] / layer.w_scales[oc]);
        layer.weights[i] = static_cast<int8_t>(std::clamp(q, -127.0, 127.0));
    }
    return layer;
}

// Integer 3x3 stride-2 conv on one quantized plane set; returns the float
// accumulations (w_scale * x_scale * acc + bias), pre-activation.
inline void qconv_s2(const QuantLayer& layer, const std::vector<int8_t>& qx,
                     const QuantParams& xqp, int H, int W, std::vector<double>& out) {
    const int OH = H / 2, OW = W / 2;
    out.assign(layer.out_ch * OH * OW, 0.0);
    std::vector<int32_t> acc(static_cast<std::size_t>(OH) * OW);
    for (std::size_t oc = 0; oc < layer.out_ch; ++oc) {
        std::fill(acc.begin(), acc.end(), 0);
        for (std::size_t ic = 0; ic < layer.in_ch; ++ic) {
            const int8_t* w = layer.weights.data() + (oc * layer.in_ch + ic) * 9;
            const int8_t* xp = qx.data() + ic * H * W;
            for (int kh = 0; kh < 3; ++kh) {
                for (int kw = 0; kw < 3; ++kw) {
                    const int32_t wv = w[kh * 3 + kw];
                    if (wv == 0) continue;
                    for (int oh = 0; oh < OH; ++oh) {
                        const int ih = 2 * oh - 1 + kh;
                        if (ih < 0 || ih >= H) continue;
                        int32_t* arow = acc.data() + static_cast<std::size_t>(oh) * OW;
                        const int8_t* xrow = xp + static_cast<std::size_t>(ih) * W;
                        for (int ow = 0; ow < OW; ++ow) {
                            const int iw = 2 * ow - 1 + kw;
                            if (iw < 0 || iw >= W) continue;
                            arow[ow] += wv * (static_cast<int32_t>(xrow[iw]) - xqp.zero_point);
                        }
                    }
                }
            }
        }
        const double s = layer.w_scales[oc] * xqp.scale;
        double* orow = out.data() + oc * OH * OW;
        for (int i = 0; i < OH * OW; ++i) orow[i] = s * acc[i] + layer.bias[oc];
    }
}

// Integer 3x3 stride-2 transposed conv (padding 1, output padding 1).
inline void qtconv_s2(const QuantLayer& layer, const std::vector<int8_t>& qx,
                      const QuantParams& xqp, int H, int W, std::vector<double>& out) {
    const int OH = 2 * H, OW = 2 * W;
    out.assign(layer.out_ch * OH * OW, 0.0);
    std::vector<int32_t> acc(static_cast<std::size_t>(OH) * OW);
    for (std::size_t oc = 0; oc < layer.out_ch; ++oc) {
        std::fill(acc.begin(), acc.end(), 0);
        for (std::size_t ic = 0; ic < layer.in_ch; ++ic) {
            const int8_t* w = layer.weights.data() + (ic * layer.out_ch + oc) * 9;
            const int8_t* xp = qx.data() + ic * H * W;
            for (int kh = 0; kh < 3; ++kh) {
                for (int kw = 0; kw < 3; ++kw) {
                    const int32_t wv = w[kh * 3 + kw];
                    if (wv == 0) continue;
                    for (int ih = 0; ih < H; ++ih) {
                        const int oh = 2 * ih - 1 + kh;
                        if (oh < 0 || oh >= OH) continue;
                        int32_t* arow = acc.data() + static_cast<std::size_t>(oh) * OW;
                        const int8_t* xrow = xp + static_cast<std::size_t>(ih) * W;
                        for (int iw = 0; iw < W; ++iw) {
                            const int ow = 2 * iw - 1 + kw;
                            if (ow < 0 || ow >= OW) continue;
                            arow[ow] += wv * (static_cast<int32_t>(xrow[iw]) - xqp.zero_point);
                        }
                    }
                }
            }
        }
        const double s = layer.w_scales[oc] * xqp.scale;
        double* orow = out.data() + oc * OH * OW;
        for (int i = 0; i < OH * OW; ++i) orow[i] = s * acc[i] + layer.bias[oc];
    }
}

// Integer 1x1 conv.
inline void qconv_1x1(const QuantLayer& layer, const std::vector<int8_t>& qx,
                      const QuantParams& xqp, int H, int W, std::vector<double>& out) {
    out.assign(layer.out_ch * H * W, 0.0);
    std::vector<int32_t> acc(static_cast<std::size_t>(H) * W);
    for (std::size_t oc = 0; oc < layer.out_ch; ++oc) {
        std::fill(acc.begin(), acc.end(), 0);
        for (std::size_t ic = 0; ic < layer.in_ch; ++ic) {
            const int32_t wv = layer.weights[oc * layer.in_ch + ic];
            if (wv == 0) continue;
            const int8_t* xp = qx.data() + ic * H * W;
            for (int i = 0; i < H * W; ++i) {
                acc[i] += wv * (static_cast<int32_t>(xp[i]) - xqp.zero_point);
            }
        }
        const double s = layer.w_scales[oc] * xqp.scale;
        double* orow = out.data() + oc * H * W;
        for (int i = 0; i < H * W; ++i) orow[i] = s * acc[i] + layer.bias[oc];
    }
}

inline std::vector<int8_t> requantize(const std::vector<double>& x, const QuantParams& qp) {
    std::vector<int8_t> q(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) q[i] = quantize_value(x[i], qp);
    return q;
}

}  // namespace detail

// Folds the eval-mode batchnorm into the preceding convolution and quantizes
// every layer: symmetric per-output-channel weights, asymmetric per-tensor
// activations from the calibration ranges.
inline QuantModel quantize_model(const TcsModel& model, const ActivationRanges& ranges) {
    if (!ranges.calibrated) throw NotCalibrated("quantize_model: calibrate first");
    QuantModel qm;
    qm.cfg = model.cfg;
    qm.act = ranges;

    auto fold = [](const Conv2d& conv, const BatchNorm2d& bn) {
        Tensor w = conv.weight;
        std::vector<double> b(conv.out_ch);
        for (std::size_t oc = 0; oc < conv.out_ch; ++oc) {
            const double inv_std = 1.0 / std::sqrt(bn.running_var[oc] + bn.eps);
            const double g = bn.gamma.data[oc] * inv_std;
            for (std::size_t i = 0; i < conv.in_ch * 9; ++i) {
                w.data[oc * conv.in_ch * 9 + i] *= g;
            }
            b[oc] = (conv.bias.data[oc] - bn.running_mean[oc]) * g + bn.beta.data[oc];
        }
        return std::make_pair(w, b);
    };

    const auto [w1, b1] = fold(model.enc1, model.bn1);
    const auto [w2, b2] = fold(model.enc2, model.bn2);
    qm.enc1 = detail::quantize_layer(w1, b1, 6, model.cfg.c1, false);
    qm.enc2 = detail::quantize_layer(w2, b2, model.cfg.c1, model.cfg.c2, false);
    qm.dec1 = detail::quantize_layer(model.dec1.weight, model.dec1.bias.data,
                                     model.cfg.c2, model.cfg.c1, true);
    qm.dec2 = detail::quantize_layer(model.dec2.weight, model.dec2.bias.data,
                                     model.cfg.c1, 4, true);
    qm.skip1 = detail::quantize_layer(model.skip1.weight, model.skip1.bias.data,
                                      model.cfg.c1, model.cfg.c1, false);
    qm.skip2 = detail::quantize_layer(model.skip2.weight, model.skip2.bias.data, 6, 4, false);
    return qm;
}

// Full integer inference: INT8 tensors between layers, 32-bit integer
// accumulation inside every conv, float requantization steps, dequantized
// four-channel output.
inline HeatmapSet quantized_forward(const QuantModel& qm, const BevInput& input) {
    if (!qm.act.calibrated) throw NotCalibrated("quantized_forward: model not calibrated");
    const int k = qm.cfg.k;
    if (input.k != k) throw ShapeMismatch("quantized_forward: input size mismatch");
    const std::size_t plane = static_cast<std::size_t>(k) * k;

    std::vector<int8_t> qx(input.channels.size());
    for (std::size_t i = 0; i < qx.size(); ++i) {
        qx[i] = quantize_value(input.channels[i], qm.act.input);
    }

    std::vector<double> f1;
    detail::qconv_s2(qm.enc1, qx, qm.act.input, k, k, f1);
    for (auto& v : f1) v = std::max(v, 0.0);
    const std::vector<int8_t> qa1 = detail::requantize(f1, qm.act.act1);

    std::vector<double> f2;
    detail::qconv_s2(qm.enc2, qa1, qm.act.act1, k / 2, k / 2, f2);
    for (auto& v : f2) v = std::max(v, 0.0);
    const std::vector<int8_t> qa2 = detail::requantize(f2, qm.act.act2);

    std::vector<double> f3;
    detail::qtconv_s2(qm.dec1, qa2, qm.act.act2, k / 4, k / 4, f3);
    if (qm.cfg.residual) {
        std::vector<double> fs;
        detail::qconv_1x1(qm.skip1, qa1, qm.act.act1, k / 2, k / 2, fs);
        for (std::size_t i = 0; i < f3.size(); ++i) f3[i] += fs[i];
    }
    for (auto& v : f3) v = std::max(v, 0.0);
    const std::vector<int8_t> qh = detail::requantize(f3, qm.act.act3);

    std::vector<double> out;
    detail::qtconv_s2(qm.dec2, qh, qm.act.act3, k / 2, k / 2, out);
    if (qm.cfg.input_skip) {
        std::vector<double> fs;
        detail::qconv_1x1(qm.skip2, qx, qm.act.input, k, k, fs);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += fs[i];
    }

    HeatmapSet maps(k);
    for (std::size_t i = 0; i < plane; ++i) maps.pos[i] = std::max(out[i], 0.0);
    std::copy(out.begin() + plane, out.begin() + 2 * plane, maps.v_x.begin());
    std::copy(out.begin() + 2 * plane, out.begin() + 3 * plane, maps.v_y.begin());
    std::copy(out.begin() + 3 * plane, out.begin() + 4 * plane, maps.yaw.begin());
    return maps;
}

// ---------------------------------------------------------------------------
// Quantized checkpoint: magic "TCSQ", version u32, then per-layer records
// (name, dims, per-channel f32 scales, i32 zero point, f32 biases, INT8
// payload) and the activation scale/zero-point table.

inline void save_quant_model(const QuantModel& qm, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_quant_model: cannot open " + path);
    os.write("TCSQ", 4);
    detail::write_raw<uint32_t>(os, 1u);
    const double meta[6] = {static_cast<double>(qm.cfg.k), static_cast<double>(qm.cfg.c1),
                            static_cast<double>(qm.cfg.c2), qm.cfg.residual ? 1.0 : 0.0,
                            qm.cfg.input_skip ? 1.0 : 0.0, 1.0};
    for (double v : meta) detail::write_raw<float>(os, static_cast<float>(v));
    auto write_qp = [&](const QuantParams& qp) {
        detail::write_raw<float>(os, static_cast<float>(qp.scale));
        detail::write_raw<int32_t>(os, qp.zero_point);
        detail::write_raw<float>(os, static_cast<float>(qp.observed_min));
        detail::write_raw<float>(os, static_cast<float>(qp.observed_max));
    };
    write_qp(qm.act.input);
    write_qp(qm.act.act1);
    write_qp(qm.act.act2);
    write_qp(qm.act.act3);
    auto write_layer = [&](const QuantLayer& l) {
        detail::write_raw<uint32_t>(os, static_cast<uint32_t>(l.in_ch));
        detail::write_raw<uint32_t>(os, static_cast<uint32_t>(l.out_ch));
        detail::write_raw<uint8_t>(os, l.transposed ? 1 : 0);
        for (double s : l.w_scales) detail::write_raw<float>(os, static_cast<float>(s));
        detail::write_raw<int32_t>(os, 0);  // weight zero point (symmetric)
        for (double b : l.bias) detail::write_raw<float>(os, static_cast<float>(b));
        os.write(reinterpret_cast<const char*>(l.weights.data()),
                 static_cast<std::streamsize>(l.weights.size()));
    };
    write_layer(qm.enc1);
    write_layer(qm.enc2);
    write_layer(qm.dec1);
    write_layer(qm.dec2);
    write_layer(qm.skip1);
    write_layer(qm.skip2);
    if (!os) throw IoError("save_quant_model: write failed for " + path);
}

inline QuantModel load_quant_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_quant_model: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TCSQ", 4) != 0) {
        throw SchemaError("load_quant_model: bad magic in " + path);
    }
    uint32_t version = 0;
    if (!detail::read_raw(is, version) || version != 1u) {
        throw SchemaError("load_quant_model: unsupported version");
    }
    float meta[6];
    for (auto& v : meta) {
        if (!detail::read_raw(is, v)) throw SchemaError("load_quant_model: truncated meta");
    }
    QuantModel qm;
    qm.cfg.k = static_cast<int>(meta[0]);
    qm.cfg.c1 = static_cast<int>(meta[1]);
    qm.cfg.c2 = static_cast<int>(meta[2]);
    qm.cfg.residual = meta[3] != 0.0f;
    qm.cfg.input_skip = meta[4] != 0.0f;
    auto read_qp = [&](QuantParams& qp) {
        float scale, omin, omax;
        int32_t zp;
        if (!detail::read_raw(is, scale) || !detail::read_raw(is, zp) ||
            !detail::read_raw(is, omin) || !detail::read_raw(is, omax)) {
            throw SchemaError("load_quant_model: truncated activation params");
        }
        qp.scale = scale;
        qp.zero_point = zp;
        qp.observed_min = omin;
        qp.observed_max = omax;
    };
    read_qp(qm.act.input);
    read_qp(qm.act.act1);
    read_qp(qm.act.act2);
    read_qp(qm.act.act3);
    qm.act.calibrated = true;
    auto read_layer = [&](QuantLayer& l, std::size_t taps) {
        uint32_t in_ch, out_ch;
        uint8_t transposed;
        if (!detail::read_raw(is, in_ch) || !detail::read_raw(is, out_ch) ||
            !detail::read_raw(is, transposed)) {
            throw SchemaError("load_quant_model: truncated layer header");
        }
        l.in_ch = in_ch;
        l.out_ch = out_ch;
        l.transposed = transposed != 0;
        l.w_scales.resize(out_ch);
        for (auto& s : l.w_scales) {
            float f;
            if (!detail::read_raw(is, f)) throw SchemaError("load_quant_model: truncated scales");
            s = f;
        }
        int32_t wzp;
        if (!detail::read_raw(is, wzp)) throw SchemaError("load_quant_model: truncated layer");
        l.bias.resize(out_ch);
        for (auto& b : l.bias) {
            float f;
            if (!detail::read_raw(is, f)) throw SchemaError("load_quant_model: truncated bias");
            b = f;
        }
        l.weights.resize(in_ch * out_ch * taps);
        is.read(reinterpret_cast<char*>(l.weights.data()),
                static_cast<std::streamsize>(l.weights.size()));
        if (!is) throw SchemaError("load_quant_model: truncated weights");
    };
    read_layer(qm.enc1, 9);
    read_layer(qm.enc2, 9);
    read_layer(qm.dec1, 9);
    read_layer(qm.dec2, 9);
    read_layer(qm.skip1, 1);
    read_layer(qm.skip2, 1);
    return qm;
}

}  // namespace tcs
