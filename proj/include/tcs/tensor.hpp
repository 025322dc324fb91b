#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "tcs/common.hpp"

namespace tcs {

// Dense n-d array of doubles with an optional same-shape gradient buffer.
// Layout is row-major; the network uses NCHW throughout.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until alloc_grad()

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)) {
        data.assign(numel_of(shape), fill);
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }

    std::size_t dim(std::size_t i) const { return shape.at(i); }

    void alloc_grad() { grad.assign(data.size(), 0.0); }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
};

namespace detail {

// The batched layers produce GEMMs with small M, K and a very long
// N (batch * spatial). Tiles along the long axis keep the streamed operand
// resident in cache while the row pairs revisit it.
inline constexpr std::size_t kGemmTile = 512;

// C(M,N) += A(M,K) * B(K,N); row-major. 2x2 register blocking inside
// N-tiles.
inline void gemm_acc(const double* __restrict A, const double* __restrict B,
                     double* __restrict C, std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t n0 = 0; n0 < N; n0 += kGemmTile) {
        const std::size_t n1 = std::min(N, n0 + kGemmTile);
        std::size_t m = 0;
        for (; m + 1 < M; m += 2) {
            const double* a0 = A + m * K;
            const double* a1 = a0 + K;
            double* c0 = C + m * N;
            double* c1 = c0 + N;
            std::size_t k = 0;
            for (; k + 1 < K; k += 2) {
                const double a00 = a0[k], a01 = a0[k + 1];
                const double a10 = a1[k], a11 = a1[k + 1];
                const double* b0 = B + k * N;
                const double* b1 = b0 + N;
                for (std::size_t n = n0; n < n1; ++n) {
                    const double bv0 = b0[n], bv1 = b1[n];
                    c0[n] += a00 * bv0 + a01 * bv1;
                    c1[n] += a10 * bv0 + a11 * bv1;
                }
            }
            for (; k < K; ++k) {
                const double a0k = a0[k], a1k = a1[k];
                const double* b = B + k * N;
                for (std::size_t n = n0; n < n1; ++n) {
                    c0[n] += a0k * b[n];
                    c1[n] += a1k * b[n];
                }
            }
        }
        for (; m < M; ++m) {
            const double* a = A + m * K;
            double* c = C + m * N;
            for (std::size_t k = 0; k < K; ++k) {
                const double av = a[k];
                const double* b = B + k * N;
                for (std::size_t n = n0; n < n1; ++n) c[n] += av * b[n];
            }
        }
    }
}

// C(M,N) += A(M,L) * B(N,L)^T; partial dot products per L-tile so B stays
// cached across the m loop.
inline void gemm_abt_acc(const double* __restrict A, const double* __restrict B,
                         double* __restrict C, std::size_t M, std::size_t L,
                         std::size_t N) {
    for (std::size_t l0 = 0; l0 < L; l0 += kGemmTile) {
        const std::size_t l1 = std::min(L, l0 + kGemmTile);
        for (std::size_t m = 0; m < M; ++m) {
            const double* a = A + m * L;
            std::size_t n = 0;
            for (; n + 1 < N; n += 2) {
                const double* b0 = B + n * L;
                const double* b1 = b0 + L;
                double s0 = 0.0, s1 = 0.0;
                for (std::size_t l = l0; l < l1; ++l) {
                    s0 += a[l] * b0[l];
                    s1 += a[l] * b1[l];
                }
                C[m * N + n] += s0;
                C[m * N + n + 1] += s1;
            }
            for (; n < N; ++n) {
                const double* b = B + n * L;
                double s = 0.0;
                for (std::size_t l = l0; l < l1; ++l) s += a[l] * b[l];
                C[m * N + n] += s;
            }
        }
    }
}

// C(M,N) += A(K,M)^T * B(K,N)
inline void gemm_atb_acc(const double* __restrict A, const double* __restrict B,
                         double* __restrict C, std::size_t K, std::size_t M,
                         std::size_t N) {
    for (std::size_t n0 = 0; n0 < N; n0 += kGemmTile) {
        const std::size_t n1 = std::min(N, n0 + kGemmTile);
        std::size_t k = 0;
        for (; k + 1 < K; k += 2) {
            const double* b0 = B + k * N;
            const double* b1 = b0 + N;
            for (std::size_t m = 0; m < M; ++m) {
                const double a0 = A[k * M + m];
                const double a1 = A[(k + 1) * M + m];
                double* c = C + m * N;
                for (std::size_t n = n0; n < n1; ++n) c[n] += a0 * b0[n] + a1 * b1[n];
            }
        }
        for (; k < K; ++k) {
            const double* b = B + k * N;
            for (std::size_t m = 0; m < M; ++m) {
                const double av = A[k * M + m];
                double* c = C + m * N;
                for (std::size_t n = n0; n < n1; ++n) c[n] += av * b[n];
            }
        }
    }
}

}  // namespace detail

}  // namespace tcs
