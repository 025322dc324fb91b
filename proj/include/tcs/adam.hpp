#pragma once

#include <cmath>
#include <vector>

#include "tcs/tensor.hpp"

namespace tcs {

// Bias-corrected Adam over a fixed list of parameter tensors.
struct Adam {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t t = 0;

    std::vector<std::vector<double>> m, v;

    void step(const std::vector<Tensor*>& params) {
        if (m.empty()) {
            m.resize(params.size());
            v.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i].assign(params[i]->numel(), 0.0);
                v[i].assign(params[i]->numel(), 0.0);
            }
        }
        if (m.size() != params.size()) throw ShapeMismatch("Adam: parameter list changed");
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            if (p.grad.size() != p.data.size() || m[i].size() != p.data.size()) {
                throw ShapeMismatch("Adam: gradient/moment shape mismatch");
            }
            for (std::size_t j = 0; j < p.data.size(); ++j) {
                const double g = p.grad[j];
                m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
                v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
                const double mhat = m[i][j] / bc1;
                const double vhat = v[i][j] / bc2;
                p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

}  // namespace tcs
