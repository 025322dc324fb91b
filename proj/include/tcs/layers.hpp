#pragma once

#include <cmath>
#include <vector>

#include "tcs/rng.hpp"
#include "tcs/tensor.hpp"

namespace tcs {

namespace detail {

// The convolutions run on a channel-major scratch layout (C, N*P) so that a
// whole batch becomes a single wide GEMM per layer.

inline void to_channel_major(const Tensor& x, std::vector<double>& cm) {
    const std::size_t N = x.shape[0], C = x.shape[1], P = x.shape[2] * x.shape[3];
    cm.resize(C * N * P);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const double* src = x.data.data() + (n * C + c) * P;
            double* dst = cm.data() + c * N * P + n * P;
            std::copy(src, src + P, dst);
        }
    }
}

inline void from_channel_major(const std::vector<double>& cm, Tensor& x) {
    const std::size_t N = x.shape[0], C = x.shape[1], P = x.shape[2] * x.shape[3];
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const double* src = cm.data() + c * N * P + n * P;
            double* dst = x.data.data() + (n * C + c) * P;
            std::copy(src, src + P, dst);
        }
    }
}

// im2col for 3x3 kernels, stride 2, padding 1, whole batch.
// col has shape (C*9, N*OH*OW).
inline void im2col_batch(const Tensor& x, std::vector<double>& col) {
    const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t OH = H / 2, OW = W / 2, P = OH * OW;
    col.assign(C * 9 * N * P, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (int kh = 0; kh < 3; ++kh) {
            for (int kw = 0; kw < 3; ++kw) {
                double* row = col.data() + ((c * 9) + kh * 3 + kw) * (N * P);
                for (std::size_t n = 0; n < N; ++n) {
                    const double* xp = x.data.data() + (n * C + c) * H * W;
                    double* dst = row + n * P;
                    for (std::size_t oh = 0; oh < OH; ++oh) {
                        const long ih = static_cast<long>(2 * oh) - 1 + kh;
                        if (ih < 0 || ih >= static_cast<long>(H)) continue;
                        const double* xrow = xp + ih * W;
                        double* drow = dst + oh * OW;
                        // iw = 2*ow - 1 + kw
                        std::size_t ow0 = (kw == 0) ? 1 : 0;
                        for (std::size_t ow = ow0; ow < OW; ++ow) {
                            const std::size_t iw = 2 * ow - 1 + kw;
                            if (iw >= W) break;
                            drow[ow] = xrow[iw];
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add of the col layout back onto the input gradient.
inline void col2im_batch(const std::vector<double>& col, Tensor& gx) {
    const std::size_t N = gx.shape[0], C = gx.shape[1], H = gx.shape[2], W = gx.shape[3];
    const std::size_t OH = H / 2, OW = W / 2, P = OH * OW;
    for (std::size_t c = 0; c < C; ++c) {
        for (int kh = 0; kh < 3; ++kh) {
            for (int kw = 0; kw < 3; ++kw) {
                const double* row = col.data() + ((c * 9) + kh * 3 + kw) * (N * P);
                for (std::size_t n = 0; n < N; ++n) {
                    double* gp = gx.data.data() + (n * C + c) * H * W;
                    const double* src = row + n * P;
                    for (std::size_t oh = 0; oh < OH; ++oh) {
                        const long ih = static_cast<long>(2 * oh) - 1 + kh;
                        if (ih < 0 || ih >= static_cast<long>(H)) continue;
                        double* grow = gp + ih * W;
                        const double* srow = src + oh * OW;
                        std::size_t ow0 = (kw == 0) ? 1 : 0;
                        for (std::size_t ow = ow0; ow < OW; ++ow) {
                            const std::size_t iw = 2 * ow - 1 + kw;
                            if (iw >= W) break;
                            grow[iw] += srow[ow];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

// 3x3 convolution, stride 2, padding 1: halves the spatial dimensions.
// Cross-correlation convention (no kernel flip).
struct Conv2d {
    std::size_t in_ch = 0, out_ch = 0;
    Tensor weight;  // (out_ch, in_ch, 3, 3)
    Tensor bias;    // (out_ch)
    Tensor cached_input;
    std::vector<double> cached_col;
    bool has_cache = false;

    Conv2d() = default;
    Conv2d(std::size_t in, std::size_t out) : in_ch(in), out_ch(out) {
        weight = Tensor({out, in, 3, 3});
        bias = Tensor({out});
        weight.alloc_grad();
        bias.alloc_grad();
    }

    void init(Rng& rng) {
        const double limit = std::sqrt(6.0 / (in_ch * 9.0));
        for (auto& w : weight.data) w = rng.uniform(-limit, limit);
        std::fill(bias.data.begin(), bias.data.end(), 0.0);
    }

    Tensor forward(const Tensor& x, bool keep_cache = true) {
        if (x.shape.size() != 4 || x.shape[1] != in_ch) {
            throw ShapeMismatch("Conv2d: expected (N, in_ch, H, W) input");
        }
        const std::size_t N = x.shape[0], H = x.shape[2], W = x.shape[3];
        if (H % 2 != 0 || W % 2 != 0) throw ShapeMismatch("Conv2d: H and W must be even");
        const std::size_t OH = H / 2, OW = W / 2, P = OH * OW;

        std::vector<double> col;
        detail::im2col_batch(x, col);
        std::vector<double> ycm(out_ch * N * P);
        for (std::size_t o = 0; o < out_ch; ++o) {
            std::fill(ycm.begin() + o * N * P, ycm.begin() + (o + 1) * N * P, bias.data[o]);
        }
        detail::gemm_acc(weight.data.data(), col.data(), ycm.data(), out_ch, in_ch * 9,
                         N * P);
        Tensor y({N, out_ch, OH, OW});
        detail::from_channel_major(ycm, y);
        if (keep_cache) {
            cached_input = x;
            cached_col = std::move(col);
            has_cache = true;
        }
        return y;
    }

    // Accumulates parameter gradients and returns the input gradient.
    Tensor backward(const Tensor& gy) {
        if (!has_cache) throw MissingForwardCache("Conv2d: backward without forward");
        const Tensor& x = cached_input;
        const std::size_t N = x.shape[0], H = x.shape[2], W = x.shape[3];
        const std::size_t OH = H / 2, OW = W / 2, P = OH * OW;
        if (gy.shape != std::vector<std::size_t>({N, out_ch, OH, OW})) {
            throw ShapeMismatch("Conv2d: upstream gradient shape mismatch");
        }
        std::vector<double> gycm;
        detail::to_channel_major(gy, gycm);
        detail::gemm_abt_acc(gycm.data(), cached_col.data(), weight.grad.data(), out_ch,
                             N * P, in_ch * 9);
        for (std::size_t o = 0; o < out_ch; ++o) {
            double s = 0.0;
            const double* g = gycm.data() + o * N * P;
            for (std::size_t i = 0; i < N * P; ++i) s += g[i];
            bias.grad[o] += s;
        }
        std::vector<double> gcol(in_ch * 9 * N * P, 0.0);
        detail::gemm_atb_acc(weight.data.data(), gycm.data(), gcol.data(), out_ch,
                             in_ch * 9, N * P);
        Tensor gx(x.shape);
        detail::col2im_batch(gcol, gx);
        return gx;
    }
};

// 3x3 transposed convolution, stride 2, padding 1, output padding 1:
// doubles the spatial dimensions exactly.
struct TConv2d {
    std::size_t in_ch = 0, out_ch = 0;
    Tensor weight;  // (in_ch, out_ch, 3, 3)
    Tensor bias;    // (out_ch)
    std::vector<double> cached_xcm;
    std::vector<std::size_t> cached_shape;
    bool has_cache = false;

    TConv2d() = default;
    TConv2d(std::size_t in, std::size_t out) : in_ch(in), out_ch(out) {
        weight = Tensor({in, out, 3, 3});
        bias = Tensor({out});
        weight.alloc_grad();
        bias.alloc_grad();
    }

    void init(Rng& rng) {
        const double limit = std::sqrt(6.0 / (in_ch * 9.0));
        for (auto& w : weight.data) w = rng.uniform(-limit, limit);
        std::fill(bias.data.begin(), bias.data.end(), 0.0);
    }

    Tensor forward(const Tensor& x, bool keep_cache = true) {
        if (x.shape.size() != 4 || x.shape[1] != in_ch) {
            throw ShapeMismatch("TConv2d: expected (N, in_ch, H, W) input");
        }
        const std::size_t N = x.shape[0], H = x.shape[2], W = x.shape[3];
        const std::size_t OH = 2 * H, OW = 2 * W, P = H * W;

        std::vector<double> xcm;
        detail::to_channel_major(x, xcm);
        // colY(OC*9, N*P) = W(IC, OC*9)^T * xcm(IC, N*P)
        std::vector<double> coly(out_ch * 9 * N * P, 0.0);
        detail::gemm_atb_acc(weight.data.data(), xcm.data(), coly.data(), in_ch,
                             out_ch * 9, N * P);

        std::vector<double> ycm(out_ch * N * OH * OW);
        for (std::size_t o = 0; o < out_ch; ++o) {
            std::fill(ycm.begin() + o * N * OH * OW, ycm.begin() + (o + 1) * N * OH * OW,
                      bias.data[o]);
        }
        // Scatter: output position oh = 2*ih - 1 + kh (padding 1).
        for (std::size_t o = 0; o < out_ch; ++o) {
            for (int kh = 0; kh < 3; ++kh) {
                for (int kw = 0; kw < 3; ++kw) {
                    const double* row = coly.data() + ((o * 9) + kh * 3 + kw) * (N * P);
                    for (std::size_t n = 0; n < N; ++n) {
                        const double* src = row + n * P;
                        double* dst = ycm.data() + o * N * OH * OW + n * OH * OW;
                        for (std::size_t ih = 0; ih < H; ++ih) {
                            const long oh = static_cast<long>(2 * ih) - 1 + kh;
                            if (oh < 0 || oh >= static_cast<long>(OH)) continue;
                            double* drow = dst + oh * OW;
                            const double* srow = src + ih * W;
                            const std::size_t iw0 = (kw == 0) ? 1 : 0;
                            for (std::size_t iw = iw0; iw < W; ++iw) {
                                const std::size_t ow = 2 * iw - 1 + kw;
                                if (ow >= OW) break;
                                drow[ow] += srow[iw];
                            }
                        }
                    }
                }
            }
        }
        Tensor y({N, out_ch, OH, OW});
        detail::from_channel_major(ycm, y);
        if (keep_cache) {
            cached_xcm = std::move(xcm);
            cached_shape = x.shape;
            has_cache = true;
        }
        return y;
    }

    Tensor backward(const Tensor& gy) {
        if (!has_cache) throw MissingForwardCache("TConv2d: backward without forward");
        const std::size_t N = cached_shape[0], H = cached_shape[2], W = cached_shape[3];
        const std::size_t OH = 2 * H, OW = 2 * W, P = H * W;
        if (gy.shape != std::vector<std::size_t>({N, out_ch, OH, OW})) {
            throw ShapeMismatch("TConv2d: upstream gradient shape mismatch");
        }
        std::vector<double> gycm;
        detail::to_channel_major(gy, gycm);
        // Gather the forward scatter pattern.
        std::vector<double> gcoly(out_ch * 9 * N * P, 0.0);
        for (std::size_t o = 0; o < out_ch; ++o) {
            for (int kh = 0; kh < 3; ++kh) {
                for (int kw = 0; kw < 3; ++kw) {
                    double* row = gcoly.data() + ((o * 9) + kh * 3 + kw) * (N * P);
                    for (std::size_t n = 0; n < N; ++n) {
                        double* dst = row + n * P;
                        const double* src = gycm.data() + o * N * OH * OW + n * OH * OW;
                        for (std::size_t ih = 0; ih < H; ++ih) {
                            const long oh = static_cast<long>(2 * ih) - 1 + kh;
                            if (oh < 0 || oh >= static_cast<long>(OH)) continue;
                            const double* srow = src + oh * OW;
                            double* drow = dst + ih * W;
                            const std::size_t iw0 = (kw == 0) ? 1 : 0;
                            for (std::size_t iw = iw0; iw < W; ++iw) {
                                const std::size_t ow = 2 * iw - 1 + kw;
                                if (ow >= OW) break;
                                drow[iw] = srow[ow];
                            }
                        }
                    }
                }
            }
        }
        // gx(IC, N*P) = W(IC, OC*9) * gcoly(OC*9, N*P)
        std::vector<double> gxcm(in_ch * N * P, 0.0);
        detail::gemm_acc(weight.data.data(), gcoly.data(), gxcm.data(), in_ch, out_ch * 9,
                         N * P);
        // gW(IC, OC*9) += xcm(IC, N*P) * gcoly(OC*9, N*P)^T
        detail::gemm_abt_acc(cached_xcm.data(), gcoly.data(), weight.grad.data(), in_ch,
                             N * P, out_ch * 9);
        for (std::size_t o = 0; o < out_ch; ++o) {
            double s = 0.0;
            const double* g = gycm.data() + o * N * OH * OW;
            for (std::size_t i = 0; i < N * OH * OW; ++i) s += g[i];
            bias.grad[o] += s;
        }
        Tensor gx({N, in_ch, H, W});
        detail::from_channel_major(gxcm, gx);
        return gx;
    }
};

// 1x1 convolution, stride 1; the projection used by the residual skips.
struct PointwiseConv {
    std::size_t in_ch = 0, out_ch = 0;
    Tensor weight;  // (out_ch, in_ch)
    Tensor bias;    // (out_ch)
    std::vector<double> cached_xcm;
    std::vector<std::size_t> cached_shape;
    bool has_cache = false;

    PointwiseConv() = default;
    PointwiseConv(std::size_t in, std::size_t out) : in_ch(in), out_ch(out) {
        weight = Tensor({out, in});
        bias = Tensor({out});
        weight.alloc_grad();
        bias.alloc_grad();
    }

    void init(Rng& rng) {
        const double limit = std::sqrt(6.0 / in_ch);
        for (auto& w : weight.data) w = rng.uniform(-limit, limit);
        std::fill(bias.data.begin(), bias.data.end(), 0.0);
    }

    Tensor forward(const Tensor& x, bool keep_cache = true) {
        if (x.shape.size() != 4 || x.shape[1] != in_ch) {
            throw ShapeMismatch("PointwiseConv: expected (N, in_ch, H, W) input");
        }
        const std::size_t N = x.shape[0], H = x.shape[2], W = x.shape[3], P = H * W;
        std::vector<double> xcm;
        detail::to_channel_major(x, xcm);
        std::vector<double> ycm(out_ch * N * P);
        for (std::size_t o = 0; o < out_ch; ++o) {
            std::fill(ycm.begin() + o * N * P, ycm.begin() + (o + 1) * N * P, bias.data[o]);
        }
        detail::gemm_acc(weight.data.data(), xcm.data(), ycm.data(), out_ch, in_ch, N * P);
        Tensor y({N, out_ch, H, W});
        detail::from_channel_major(ycm, y);
        if (keep_cache) {
            cached_xcm = std::move(xcm);
            cached_shape = x.shape;
            has_cache = true;
        }
        return y;
    }

    Tensor backward(const Tensor& gy) {
        if (!has_cache) throw MissingForwardCache("PointwiseConv: backward without forward");
        const std::size_t N = cached_shape[0], H = cached_shape[2], W = cached_shape[3];
        const std::size_t P = H * W;
        std::vector<double> gycm;
        detail::to_channel_major(gy, gycm);
        detail::gemm_abt_acc(gycm.data(), cached_xcm.data(), weight.grad.data(), out_ch,
                             N * P, in_ch);
        std::vector<double> gxcm(in_ch * N * P, 0.0);
        detail::gemm_atb_acc(weight.data.data(), gycm.data(), gxcm.data(), out_ch, in_ch,
                             N * P);
        for (std::size_t o = 0; o < out_ch; ++o) {
            double s = 0.0;
            const double* g = gycm.data() + o * N * P;
            for (std::size_t i = 0; i < N * P; ++i) s += g[i];
            bias.grad[o] += s;
        }
        Tensor gx({N, in_ch, H, W});
        detail::from_channel_major(gxcm, gx);
        return gx;
    }
};

// 2D batch normalization. Train mode normalizes with biased batch statistics
// and updates running stats with momentum; running_var keeps the unbiased
// estimate so eval mode matches the usual convention.
struct BatchNorm2d {
    std::size_t channels = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    Tensor gamma, beta;
    std::vector<double> running_mean, running_var;

    // caches
    Tensor cached_xhat;
    std::vector<double> cached_inv_std;
    bool has_cache = false;

    BatchNorm2d() = default;
    explicit BatchNorm2d(std::size_t c) : channels(c) {
        gamma = Tensor({c}, 1.0);
        beta = Tensor({c}, 0.0);
        gamma.alloc_grad();
        beta.alloc_grad();
        running_mean.assign(c, 0.0);
        running_var.assign(c, 1.0);
    }

    Tensor forward(const Tensor& x, bool train) {
        if (x.shape.size() != 4 || x.shape[1] != channels) {
            throw ShapeMismatch("BatchNorm2d: expected (N, C, H, W) input");
        }
        const std::size_t N = x.shape[0], H = x.shape[2], W = x.shape[3];
        const std::size_t m = N * H * W;
        Tensor y(x.shape);
        if (train) {
            if (m < 2) throw DegenerateBatch("BatchNorm2d: train mode needs N*H*W >= 2");
            cached_xhat = Tensor(x.shape);
            cached_inv_std.assign(channels, 0.0);
            for (std::size_t c = 0; c < channels; ++c) {
                double mean = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    const double* xp = x.data.data() + (n * channels + c) * H * W;
                    for (std::size_t i = 0; i < H * W; ++i) mean += xp[i];
                }
                mean /= m;
                double var = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    const double* xp = x.data.data() + (n * channels + c) * H * W;
                    for (std::size_t i = 0; i < H * W; ++i) {
                        const double d = xp[i] - mean;
                        var += d * d;
                    }
                }
                var /= m;
                const double inv_std = 1.0 / std::sqrt(var + eps);
                cached_inv_std[c] = inv_std;
                const double g = gamma.data[c], b = beta.data[c];
                for (std::size_t n = 0; n < N; ++n) {
                    const double* xp = x.data.data() + (n * channels + c) * H * W;
                    double* xh = cached_xhat.data.data() + (n * channels + c) * H * W;
                    double* yp = y.data.data() + (n * channels + c) * H * W;
                    for (std::size_t i = 0; i < H * W; ++i) {
                        xh[i] = (xp[i] - mean) * inv_std;
                        yp[i] = g * xh[i] + b;
                    }
                }
                const double var_unbiased = var * static_cast<double>(m) / (m - 1);
                running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
                running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var_unbiased;
            }
            has_cache = true;
        } else {
            for (std::size_t c = 0; c < channels; ++c) {
                const double inv_std = 1.0 / std::sqrt(running_var[c] + eps);
                const double g = gamma.data[c], b = beta.data[c];
                const double mu = running_mean[c];
                for (std::size_t n = 0; n < N; ++n) {
                    const double* xp = x.data.data() + (n * channels + c) * H * W;
                    double* yp = y.data.data() + (n * channels + c) * H * W;
                    for (std::size_t i = 0; i < H * W; ++i) yp[i] = g * (xp[i] - mu) * inv_std + b;
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& gy) {
        if (!has_cache) throw MissingForwardCache("BatchNorm2d: backward without train forward");
        const std::size_t N = gy.shape[0], H = gy.shape[2], W = gy.shape[3];
        const std::size_t m = N * H * W;
        Tensor gx(gy.shape);
        for (std::size_t c = 0; c < channels; ++c) {
            double dg = 0.0, db = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* g = gy.data.data() + (n * channels + c) * H * W;
                const double* xh = cached_xhat.data.data() + (n * channels + c) * H * W;
                for (std::size_t i = 0; i < H * W; ++i) {
                    dg += g[i] * xh[i];
                    db += g[i];
                }
            }
            gamma.grad[c] += dg;
            beta.grad[c] += db;
            const double scale = gamma.data[c] * cached_inv_std[c];
            const double mean_db = db / m;
            const double mean_dg = dg / m;
            for (std::size_t n = 0; n < N; ++n) {
                const double* g = gy.data.data() + (n * channels + c) * H * W;
                const double* xh = cached_xhat.data.data() + (n * channels + c) * H * W;
                double* gp = gx.data.data() + (n * channels + c) * H * W;
                for (std::size_t i = 0; i < H * W; ++i) {
                    gp[i] = scale * (g[i] - mean_db - xh[i] * mean_dg);
                }
            }
        }
        return gx;
    }
};

struct Relu {
    std::vector<char> mask;
    bool has_cache = false;

    Tensor forward(const Tensor& x, bool keep_cache = true) {
        Tensor y = x;
        if (keep_cache) mask.assign(x.numel(), 0);
        for (std::size_t i = 0; i < y.numel(); ++i) {
            if (y.data[i] > 0.0) {
                if (keep_cache) mask[i] = 1;
            } else {
                y.data[i] = 0.0;
            }
        }
        has_cache = keep_cache;
        return y;
    }

    Tensor backward(const Tensor& gy) {
        if (!has_cache || mask.size() != gy.numel()) {
            throw MissingForwardCache("Relu: backward without forward");
        }
        Tensor gx = gy;
        for (std::size_t i = 0; i < gx.numel(); ++i) {
            if (!mask[i]) gx.data[i] = 0.0;
        }
        return gx;
    }
};

}  // namespace tcs
