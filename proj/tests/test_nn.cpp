#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "tcs/adam.hpp"
#include "tcs/checkpoint.hpp"
#include "tcs/layers.hpp"
#include "tcs/rng.hpp"

using namespace tcs;

namespace {

bool near(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Direct six-loop convolution oracle (stride 2, padding 1, 3x3 kernel).
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t O = w.shape[0];
    Tensor y({N, O, H / 2, W / 2});
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
            for (std::size_t oh = 0; oh < H / 2; ++oh) {
                for (std::size_t ow = 0; ow < W / 2; ++ow) {
                    double acc = b.data[o];
                    for (std::size_t c = 0; c < C; ++c) {
                        for (int kh = 0; kh < 3; ++kh) {
                            for (int kw = 0; kw < 3; ++kw) {
                                const long ih = 2 * static_cast<long>(oh) - 1 + kh;
                                const long iw = 2 * static_cast<long>(ow) - 1 + kw;
                                if (ih < 0 || ih >= static_cast<long>(H) || iw < 0 ||
                                    iw >= static_cast<long>(W)) {
                                    continue;
                                }
                                acc += x.at(n, c, ih, iw) *
                                       w.data[((o * C + c) * 3 + kh) * 3 + kw];
                            }
                        }
                    }
                    y.at(n, o, oh, ow) = acc;
                }
            }
        }
    }
    return y;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

// Central-difference check of d(sum of weights * output)/d(param) for an
// arbitrary forward function.
template <typename Forward>
void check_gradients(Tensor& param, const std::vector<double>& analytic_grad,
                     Forward forward, const Tensor& loss_weights, double eps = 1e-5,
                     double tol = 1e-4) {
    REQUIRE(analytic_grad.size() == param.numel());
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double saved = param.data[i];
        param.data[i] = saved + eps;
        const Tensor up = forward();
        param.data[i] = saved - eps;
        const Tensor down = forward();
        param.data[i] = saved;
        double fd = 0.0;
        for (std::size_t j = 0; j < up.numel(); ++j) {
            fd += loss_weights.data[j] * (up.data[j] - down.data[j]);
        }
        fd /= 2.0 * eps;
        INFO("param index " << i << " analytic " << analytic_grad[i] << " fd " << fd);
        CHECK(rel_err(analytic_grad[i], fd) < tol);
    }
}

}  // namespace

TEST_CASE("tensor shape bookkeeping", "[nn]") {
    Tensor t({2, 3, 4, 4});
    CHECK(t.numel() == 96);
    CHECK(t.grad.empty());
    t.alloc_grad();
    CHECK(t.grad.size() == 96);
    t.at(1, 2, 3, 3) = 5.0;
    CHECK(t.data[95] == 5.0);
}

TEST_CASE("conv2d delta kernel picks every other pixel", "[nn]") {
    Conv2d conv(1, 1);
    std::fill(conv.weight.data.begin(), conv.weight.data.end(), 0.0);
    conv.weight.data[1 * 3 + 1] = 1.0;  // center tap
    Rng rng(1);
    Tensor x = random_tensor({1, 1, 4, 4}, rng);
    const Tensor y = conv.forward(x);
    REQUIRE(y.shape == std::vector<std::size_t>({1, 1, 2, 2}));
    CHECK(near(y.at(0, 0, 0, 0), x.at(0, 0, 0, 0)));
    CHECK(near(y.at(0, 0, 0, 1), x.at(0, 0, 0, 2)));
    CHECK(near(y.at(0, 0, 1, 0), x.at(0, 0, 2, 0)));
    CHECK(near(y.at(0, 0, 1, 1), x.at(0, 0, 2, 2)));
}

TEST_CASE("conv2d zero weights yield constant bias", "[nn]") {
    Conv2d conv(2, 3);
    std::fill(conv.weight.data.begin(), conv.weight.data.end(), 0.0);
    conv.bias.data = {0.5, -1.0, 2.0};
    Rng rng(2);
    const Tensor x = random_tensor({2, 2, 6, 6}, rng);
    const Tensor y = conv.forward(x);
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t o = 0; o < 3; ++o) {
            for (std::size_t i = 0; i < 3; ++i) {
                for (std::size_t j = 0; j < 3; ++j) {
                    CHECK(near(y.at(n, o, i, j), conv.bias.data[o]));
                }
            }
        }
    }
}

TEST_CASE("conv2d matches direct loop oracle", "[nn]") {
    Rng rng(3);
    Conv2d conv(2, 4);
    conv.init(rng);
    const Tensor x = random_tensor({1, 2, 6, 6}, rng);
    Conv2d conv2 = conv;
    const Tensor got = conv2.forward(x);
    const Tensor expect = conv_oracle(x, conv.weight, conv.bias);
    REQUIRE(got.shape == expect.shape);
    for (std::size_t i = 0; i < got.numel(); ++i) {
        CHECK(near(got.data[i], expect.data[i], 1e-12));
    }
}

TEST_CASE("conv2d rejects odd spatial dims and bad channels", "[nn]") {
    Conv2d conv(2, 4);
    Tensor odd({1, 2, 5, 5});
    CHECK_THROWS_AS(conv.forward(odd), ShapeMismatch);
    Tensor wrong({1, 3, 6, 6});
    CHECK_THROWS_AS(conv.forward(wrong), ShapeMismatch);
    CHECK_THROWS_AS(conv.backward(Tensor({1, 4, 3, 3})), MissingForwardCache);
}

TEST_CASE("conv2d gradients match finite differences", "[nn]") {
    Rng rng(4);
    Conv2d conv(2, 3);
    conv.init(rng);
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    Tensor weights = random_tensor({1, 3, 2, 2}, rng);

    conv.forward(x);
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    const Tensor gx = conv.backward(weights);

    check_gradients(conv.weight, conv.weight.grad,
                    [&] { return conv.forward(x, false); }, weights);
    check_gradients(conv.bias, conv.bias.grad, [&] { return conv.forward(x, false); },
                    weights);
    check_gradients(x, gx.data, [&] { return conv.forward(x, false); }, weights);

    // Zero upstream gradient produces zero gradients everywhere.
    conv.forward(x);
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    const Tensor gz = conv.backward(Tensor({1, 3, 2, 2}));
    for (double v : conv.weight.grad) CHECK(v == 0.0);
    for (double v : gz.data) CHECK(v == 0.0);
}

TEST_CASE("tconv2d doubles spatial dims", "[nn]") {
    Rng rng(5);
    TConv2d tconv(3, 2);
    tconv.init(rng);
    const Tensor x = random_tensor({2, 3, 16, 16}, rng);
    const Tensor y = tconv.forward(x);
    CHECK(y.shape == std::vector<std::size_t>({2, 2, 32, 32}));
}

TEST_CASE("tconv2d zero input yields bias", "[nn]") {
    Rng rng(6);
    TConv2d tconv(2, 3);
    tconv.init(rng);
    tconv.bias.data = {1.0, -2.0, 0.25};
    Tensor x({1, 2, 4, 4});
    const Tensor y = tconv.forward(x);
    for (std::size_t o = 0; o < 3; ++o) {
        for (std::size_t i = 0; i < 8; ++i) {
            for (std::size_t j = 0; j < 8; ++j) {
                CHECK(near(y.at(0, o, i, j), tconv.bias.data[o]));
            }
        }
    }
}

TEST_CASE("tconv2d equals conv2d input-gradient oracle", "[nn]") {
    // The transposed conv with weights W is the adjoint of the conv whose
    // weights swap the channel axes.
    Rng rng(7);
    TConv2d tconv(3, 2);
    tconv.init(rng);
    std::fill(tconv.bias.data.begin(), tconv.bias.data.end(), 0.0);
    const Tensor x = random_tensor({1, 3, 4, 4}, rng);
    const Tensor got = tconv.forward(x);

    Conv2d conv(2, 3);
    // conv weight (out=3, in=2, 3, 3) from tconv weight (in=3, out=2, 3, 3):
    // both layouts flatten identically, so the adjoint uses the same buffer.
    conv.weight.data = tconv.weight.data;
    std::fill(conv.bias.data.begin(), conv.bias.data.end(), 0.0);
    Tensor probe({1, 2, 8, 8});
    conv.forward(probe);
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    const Tensor adjoint = conv.backward(x);  // gradient w.r.t. conv input
    REQUIRE(adjoint.shape == got.shape);
    for (std::size_t i = 0; i < got.numel(); ++i) {
        CHECK(near(got.data[i], adjoint.data[i], 1e-12));
    }
}

TEST_CASE("tconv2d gradients match finite differences", "[nn]") {
    Rng rng(8);
    TConv2d tconv(2, 2);
    tconv.init(rng);
    Tensor x = random_tensor({1, 2, 3, 3}, rng);
    Tensor weights = random_tensor({1, 2, 6, 6}, rng);

    tconv.forward(x);
    tconv.weight.zero_grad();
    tconv.bias.zero_grad();
    const Tensor gx = tconv.backward(weights);

    check_gradients(tconv.weight, tconv.weight.grad,
                    [&] { return tconv.forward(x, false); }, weights);
    check_gradients(tconv.bias, tconv.bias.grad, [&] { return tconv.forward(x, false); },
                    weights);
    check_gradients(x, gx.data, [&] { return tconv.forward(x, false); }, weights);
}

TEST_CASE("pointwise conv matches manual mix and finite differences", "[nn]") {
    Rng rng(9);
    PointwiseConv pw(2, 2);
    pw.init(rng);
    Tensor x = random_tensor({1, 2, 3, 3}, rng);
    const Tensor y = pw.forward(x);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            const double expect0 = pw.weight.data[0] * x.at(0, 0, i, j) +
                                   pw.weight.data[1] * x.at(0, 1, i, j) + pw.bias.data[0];
            CHECK(near(y.at(0, 0, i, j), expect0, 1e-12));
        }
    }
    Tensor weights = random_tensor({1, 2, 3, 3}, rng);
    pw.weight.zero_grad();
    pw.bias.zero_grad();
    const Tensor gx = pw.backward(weights);
    check_gradients(pw.weight, pw.weight.grad, [&] { return pw.forward(x, false); }, weights);
    check_gradients(x, gx.data, [&] { return pw.forward(x, false); }, weights);
}

TEST_CASE("batchnorm train-mode statistics", "[nn]") {
    Rng rng(10);
    BatchNorm2d bn(3);
    Tensor x = random_tensor({4, 3, 5, 5}, rng, -3.0, 7.0);
    const Tensor y = bn.forward(x, true);
    const std::size_t m = 4 * 5 * 5;
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t n = 0; n < 4; ++n) {
            for (std::size_t i = 0; i < 5; ++i) {
                for (std::size_t j = 0; j < 5; ++j) mean += y.at(n, c, i, j);
            }
        }
        mean /= m;
        for (std::size_t n = 0; n < 4; ++n) {
            for (std::size_t i = 0; i < 5; ++i) {
                for (std::size_t j = 0; j < 5; ++j) {
                    var += (y.at(n, c, i, j) - mean) * (y.at(n, c, i, j) - mean);
                }
            }
        }
        var /= m;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-5);
    }
}

TEST_CASE("batchnorm affine output", "[nn]") {
    Rng rng(11);
    BatchNorm2d bn(1);
    bn.gamma.data[0] = 2.0;
    bn.beta.data[0] = 3.0;
    Tensor x = random_tensor({2, 1, 8, 8}, rng);
    const Tensor y = bn.forward(x, true);
    double mean = 0.0;
    for (double v : y.data) mean += v;
    mean /= y.numel();
    double var = 0.0;
    for (double v : y.data) var += (v - mean) * (v - mean);
    var /= y.numel();
    CHECK(std::abs(mean - 3.0) < 1e-6);
    CHECK(std::abs(std::sqrt(var) - 2.0) < 1e-4);
}

TEST_CASE("batchnorm eval mode uses running stats", "[nn]") {
    BatchNorm2d bn(1);
    bn.running_mean[0] = 1.5;
    bn.running_var[0] = 4.0;
    bn.gamma.data[0] = 3.0;
    bn.beta.data[0] = -1.0;
    Tensor x({1, 1, 1, 2});
    x.data = {1.5, 3.5};
    const Tensor y = bn.forward(x, false);
    // Hand evaluation: (x - 1.5) / sqrt(4 + 1e-5) * 3 - 1.
    CHECK(near(y.data[0], -1.0, 1e-9));
    CHECK(near(y.data[1], (3.5 - 1.5) / std::sqrt(4.0 + 1e-5) * 3.0 - 1.0, 1e-12));
}

TEST_CASE("batchnorm degenerate batch", "[nn]") {
    BatchNorm2d bn(2);
    Tensor x({1, 2, 1, 1});
    CHECK_THROWS_AS(bn.forward(x, true), DegenerateBatch);
}

TEST_CASE("batchnorm gradients match finite differences", "[nn]") {
    Rng rng(12);
    BatchNorm2d bn(2);
    bn.gamma.data = {1.3, 0.7};
    bn.beta.data = {0.2, -0.4};
    Tensor x = random_tensor({2, 2, 3, 3}, rng);
    Tensor weights = random_tensor({2, 2, 3, 3}, rng);

    bn.forward(x, true);
    bn.gamma.zero_grad();
    bn.beta.zero_grad();
    const Tensor gx = bn.backward(weights);

    // Finite differences re-run the full train-mode normalization, so the
    // batch statistics respond to the perturbation as in training.
    BatchNorm2d probe = bn;
    auto fwd = [&] {
        BatchNorm2d fresh = probe;
        return fresh.forward(x, true);
    };
    check_gradients(probe.gamma, bn.gamma.grad, fwd, weights);
    check_gradients(probe.beta, bn.beta.grad, fwd, weights);
    auto fwd_x = [&] {
        BatchNorm2d fresh = bn;
        return fresh.forward(x, true);
    };
    check_gradients(x, gx.data, fwd_x, weights);
}

TEST_CASE("relu forward and backward", "[nn]") {
    Relu relu;
    Tensor x({1, 1, 1, 4});
    x.data = {-1.0, 0.0, 0.5, 2.0};
    const Tensor y = relu.forward(x);
    CHECK(y.data == std::vector<double>({0.0, 0.0, 0.5, 2.0}));
    Tensor g({1, 1, 1, 4});
    g.data = {1.0, 1.0, 1.0, 1.0};
    const Tensor gx = relu.backward(g);
    CHECK(gx.data == std::vector<double>({0.0, 0.0, 1.0, 1.0}));
}

TEST_CASE("conv then tconv restores spatial shape", "[nn]") {
    Rng rng(14);
    for (std::size_t H : {4u, 8u, 12u, 16u}) {
        Conv2d conv(1, 2);
        conv.init(rng);
        TConv2d tconv(2, 1);
        tconv.init(rng);
        const Tensor x = random_tensor({1, 1, H, H}, rng);
        const Tensor y = tconv.forward(conv.forward(x, false), false);
        CHECK(y.shape == x.shape);
    }
}

TEST_CASE("adam zero gradient leaves parameters", "[nn]") {
    Tensor p({3});
    p.data = {1.0, -2.0, 0.5};
    p.alloc_grad();
    Adam adam;
    adam.step({&p});
    CHECK(adam.t == 1);
    CHECK(p.data == std::vector<double>({1.0, -2.0, 0.5}));
}

TEST_CASE("adam first step approximately -lr", "[nn]") {
    Tensor p({1});
    p.data = {0.0};
    p.alloc_grad();
    p.grad = {1.0};
    Adam adam;
    adam.lr = 5e-5;
    adam.step({&p});
    // Bias-corrected update: -lr * 1 / (1 + eps).
    CHECK(near(p.data[0], -5e-5 / (1.0 + 1e-8), 1e-15));
}

TEST_CASE("adam two steps match scalar reference", "[nn]") {
    Tensor p({1});
    p.data = {1.0};
    p.alloc_grad();
    Adam adam;
    adam.lr = 0.1;

    // Independent scalar recomputation of the bias-corrected update.
    double ref = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
        const double g = 1.0;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mhat = m / (1.0 - std::pow(0.9, t));
        const double vhat = v / (1.0 - std::pow(0.999, t));
        ref -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);

        p.grad = {1.0};
        adam.step({&p});
        CHECK(near(p.data[0], ref, 1e-15));
    }
}

TEST_CASE("checkpoint round trip", "[nn]") {
    Rng rng(15);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    const auto path = std::filesystem::temp_directory_path() / "tcs_ckpt_test.bin";
    save_checkpoint(path.string(), {{"a", &a}, {"b", &b}});
    auto loaded = load_checkpoint(path.string());
    REQUIRE(loaded.count("a") == 1);
    REQUIRE(loaded.count("b") == 1);
    CHECK(loaded["a"].shape == a.shape);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        CHECK(near(loaded["a"].data[i], static_cast<float>(a.data[i]), 1e-12));
    }
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
}

TEST_CASE("checkpoint rejects corrupt files", "[nn]") {
    const auto path = std::filesystem::temp_directory_path() / "tcs_ckpt_bad.bin";
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE";
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), SchemaError);
    std::filesystem::remove(path);
}
