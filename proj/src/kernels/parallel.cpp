// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/kernels/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "instantiate.hpp"

namespace pathmoe::kernels {

int worker_count() { return omp_get_max_threads(); }

void set_worker_count(int n) { omp_set_num_threads(std::max(1, n)); }

}  // namespace pathmoe::kernels

namespace pathmoe::kernels::par {

namespace {

using Index = std::ptrdiff_t;

template <typename T>
inline void axpy(T alpha, const T* __restrict x, T* __restrict y, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

#if defined(__AVX512F__)
constexpr std::size_t kVecBytes = 64;
#else
constexpr std::size_t kVecBytes = 32;
#endif

template <typename T>
struct Vec {
    using type __attribute__((vector_size(kVecBytes))) = T;
    static constexpr std::size_t width = kVecBytes / sizeof(T);
};

// C tile held in registers: kMr rows x two vectors. Every output element still
// sums over p = 0..k-1 in order, so tiling does not change rounding from one
// worker count to another.
constexpr std::size_t kMr = 6;

// c(i, j) (+)= sum_p a(i, p) * b[p * n + j], where a(i, p) = a[i * ai + p * ap].
template <typename T>
inline void full_tile(const T* __restrict a, std::size_t ai, std::size_t ap, const T* __restrict b,
                      std::size_t n, T* __restrict c, std::size_t k, bool accumulate) {
    using V = typename Vec<T>::type;
    constexpr std::size_t w = Vec<T>::width;
    V acc[kMr][2];
    for (auto& row : acc) row[0] = row[1] = V{};
    for (std::size_t p = 0; p < k; ++p) {
        V b0, b1;
        std::memcpy(&b0, b + p * n, sizeof(V));
        std::memcpy(&b1, b + p * n + w, sizeof(V));
        for (std::size_t r = 0; r < kMr; ++r) {
            const T av = a[r * ai + p * ap];
            acc[r][0] += av * b0;
            acc[r][1] += av * b1;
        }
    }
    for (std::size_t r = 0; r < kMr; ++r) {
        T* cr = c + r * n;
        T out[2 * w];
        std::memcpy(out, &acc[r][0], sizeof(V));
        std::memcpy(out + w, &acc[r][1], sizeof(V));
        if (accumulate) {
            for (std::size_t j = 0; j < 2 * w; ++j) cr[j] += out[j];
        } else {
            std::memcpy(cr, out, sizeof out);
        }
    }
}

template <typename T>
inline void edge_tile(const T* a, std::size_t ai, std::size_t ap, const T* b, std::size_t n, T* c,
                      std::size_t k, std::size_t rows, std::size_t cols, bool accumulate) {
    for (std::size_t r = 0; r < rows; ++r) {
        T* cr = c + r * n;
        if (!accumulate) std::fill(cr, cr + cols, T(0));
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[r * ai + p * ap];
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < cols; ++j) cr[j] += av * bp[j];
        }
    }
}

template <typename T>
void gemm(const T* a, std::size_t ai, std::size_t ap, const T* b, T* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
    constexpr std::size_t nr = 2 * Vec<T>::width;
    const auto row_blocks = static_cast<Index>((m + kMr - 1) / kMr);
#pragma omp parallel for schedule(static)
    for (Index bb = 0; bb < row_blocks; ++bb) {
        const std::size_t i = static_cast<std::size_t>(bb) * kMr;
        const std::size_t rows = std::min(kMr, m - i);
        for (std::size_t j = 0; j < n; j += nr) {
            const std::size_t cols = std::min(nr, n - j);
            if (rows == kMr && cols == nr) {
                full_tile(a + i * ai, ai, ap, b + j, n, c + i * n + j, k, accumulate);
            } else {
                edge_tile(a + i * ai, ai, ap, b + j, n, c + i * n + j, k, rows, cols, accumulate);
            }
        }
    }
}

}  // namespace

template <typename T>
void matmul_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    gemm(a.data(), k, 1, b.data(), c.data(), m, k, n, accumulate);
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    std::vector<T> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm(a.data(), k, 1, bt.data(), c.data(), m, k, n, accumulate);
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    gemm(a.data(), 1, m, b.data(), c.data(), m, k, n, accumulate);
}

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
    for (Index rr = 0; rr < static_cast<Index>(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        const T* xr = x.data() + r * cols;
        T* yr = y.data() + r * cols;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, xr[c]);
        T sum = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            sum += yr[c];
        }
        const T inv = T(1) / sum;
        for (std::size_t c = 0; c < cols; ++c) yr[c] *= inv;
    }
}

template <typename T>
void softmax_rows_backward(std::span<const T> y, std::span<const T> dy, std::span<T> dx,
                           std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
    for (Index rr = 0; rr < static_cast<Index>(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        const T* yr = y.data() + r * cols;
        const T* dyr = dy.data() + r * cols;
        T* dxr = dx.data() + r * cols;
        T dot = 0;
        for (std::size_t c = 0; c < cols; ++c) dot += dyr[c] * yr[c];
        for (std::size_t c = 0; c < cols; ++c) dxr[c] += yr[c] * (dyr[c] - dot);
    }
}

template <typename T>
void layer_norm(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                std::span<T> y, std::span<T> mean, std::span<T> rstd, std::size_t rows,
                std::size_t cols, T eps) {
#pragma omp parallel for schedule(static)
    for (Index rr = 0; rr < static_cast<Index>(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        const T* xr = x.data() + r * cols;
        T* yr = y.data() + r * cols;
        T mu = 0;
        for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
        mu /= static_cast<T>(cols);
        T var = 0;
        for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= static_cast<T>(cols);
        const T rs = T(1) / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        for (std::size_t c = 0; c < cols; ++c) yr[c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
    }
}

template <typename T>
void layer_norm_backward(std::span<const T> x, std::span<const T> gamma,
                         std::span<const T> mean, std::span<const T> rstd,
                         std::span<const T> dy, std::span<T> dx, std::span<T> dgamma,
                         std::span<T> dbeta, std::size_t rows, std::size_t cols) {
    const T inv_n = T(1) / static_cast<T>(cols);
#pragma omp parallel for schedule(static)
    for (Index rr = 0; rr < static_cast<Index>(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        const T* xr = x.data() + r * cols;
        const T* dyr = dy.data() + r * cols;
        T* dxr = dx.data() + r * cols;
        T sum_g = 0, sum_gx = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            const T xhat = (xr[c] - mean[r]) * rstd[r];
            const T g = dyr[c] * gamma[c];
            sum_g += g;
            sum_gx += g * xhat;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            const T xhat = (xr[c] - mean[r]) * rstd[r];
            const T g = dyr[c] * gamma[c];
            dxr[c] += rstd[r] * (g - sum_g * inv_n - xhat * sum_gx * inv_n);
        }
    }
    // Column reductions: each column sums its rows in ascending order.
    std::vector<T> dg(cols, T(0)), db(cols, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * cols;
        const T* dyr = dy.data() + r * cols;
        const T mu = mean[r], rs = rstd[r];
        for (std::size_t c = 0; c < cols; ++c) {
            dg[c] += dyr[c] * ((xr[c] - mu) * rs);
            db[c] += dyr[c];
        }
    }
    for (std::size_t c = 0; c < cols; ++c) {
        dgamma[c] += dg[c];
        dbeta[c] += db[c];
    }
}

namespace {
template <typename T>
constexpr T kGeluC = T(0.7978845608028654);  // sqrt(2 / pi)
template <typename T>
constexpr T kGeluA = T(0.044715);
}  // namespace

template <typename T>
void gelu(std::span<const T> x, std::span<T> y) {
#pragma omp parallel for schedule(static)
    for (Index ii = 0; ii < static_cast<Index>(x.size()); ++ii) {
        const T v = x[static_cast<std::size_t>(ii)];
        y[static_cast<std::size_t>(ii)] =
            T(0.5) * v * (T(1) + std::tanh(kGeluC<T> * (v + kGeluA<T> * v * v * v)));
    }
}

template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx) {
#pragma omp parallel for schedule(static)
    for (Index ii = 0; ii < static_cast<Index>(x.size()); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const T v = x[i];
        const T t = std::tanh(kGeluC<T> * (v + kGeluA<T> * v * v * v));
        const T dt = (T(1) - t * t) * kGeluC<T> * (T(1) + T(3) * kGeluA<T> * v * v);
        dx[i] += dy[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * dt);
    }
}

template <typename T>
void causal_attention(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                      std::span<T> out, std::span<T> probs, const AttentionDims& d) {
    const std::size_t width = d.heads * d.head_dim;
    const std::size_t hd = d.head_dim;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    const auto problems = static_cast<Index>(d.batch * d.heads);
#pragma omp parallel for schedule(static)
    for (Index bh = 0; bh < problems; ++bh) {
        const std::size_t b = static_cast<std::size_t>(bh) / d.heads;
        const std::size_t h = static_cast<std::size_t>(bh) % d.heads;
        T* p = probs.data() + static_cast<std::size_t>(bh) * d.seq * d.seq;
        auto at = [&](std::size_t pos) { return (b * d.seq + pos) * width + h * hd; };
        for (std::size_t i = 0; i < d.seq; ++i) {
            const T* qi = q.data() + at(i);
            T* pi = p + i * d.seq;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j <= i; ++j) {
                const T* kj = k.data() + at(j);
                T s = 0;
                for (std::size_t e = 0; e < hd; ++e) s += qi[e] * kj[e];
                pi[j] = s * scale;
                mx = std::max(mx, pi[j]);
            }
            T sum = 0;
            for (std::size_t j = 0; j <= i; ++j) {
                pi[j] = std::exp(pi[j] - mx);
                sum += pi[j];
            }
            for (std::size_t j = 0; j <= i; ++j) pi[j] /= sum;
            std::fill(pi + i + 1, pi + d.seq, T(0));
            T* oi = out.data() + at(i);
            std::fill(oi, oi + hd, T(0));
            for (std::size_t j = 0; j <= i; ++j) axpy(pi[j], v.data() + at(j), oi, hd);
        }
    }
}

template <typename T>
void causal_attention_backward(std::span<const T> q, std::span<const T> k,
                               std::span<const T> v, std::span<const T> probs,
                               std::span<const T> dout, std::span<T> dq, std::span<T> dk,
                               std::span<T> dv, const AttentionDims& d) {
    const std::size_t width = d.heads * d.head_dim;
    const std::size_t hd = d.head_dim;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    const auto problems = static_cast<Index>(d.batch * d.heads);
#pragma omp parallel
    {
        std::vector<T> dp(d.seq);
#pragma omp for schedule(static)
        for (Index bh = 0; bh < problems; ++bh) {
            const std::size_t b = static_cast<std::size_t>(bh) / d.heads;
            const std::size_t h = static_cast<std::size_t>(bh) % d.heads;
            const T* p = probs.data() + static_cast<std::size_t>(bh) * d.seq * d.seq;
            auto at = [&](std::size_t pos) { return (b * d.seq + pos) * width + h * hd; };
            for (std::size_t i = 0; i < d.seq; ++i) {
                const T* pi = p + i * d.seq;
                const T* doi = dout.data() + at(i);
                T row_dot = 0;
                for (std::size_t j = 0; j <= i; ++j) {
                    const T* vj = v.data() + at(j);
                    T s = 0;
                    for (std::size_t e = 0; e < hd; ++e) s += doi[e] * vj[e];
                    dp[j] = s;
                    row_dot += s * pi[j];
                }
                T* dqi = dq.data() + at(i);
                const T* qi = q.data() + at(i);
                for (std::size_t j = 0; j <= i; ++j) {
                    const T ds = pi[j] * (dp[j] - row_dot) * scale;
                    T* dvj = dv.data() + at(j);
                    T* dkj = dk.data() + at(j);
                    const T* kj = k.data() + at(j);
                    for (std::size_t e = 0; e < hd; ++e) {
                        dvj[e] += pi[j] * doi[e];
                        dqi[e] += ds * kj[e];
                        dkj[e] += ds * qi[e];
                    }
                }
            }
        }
    }
}

template <typename T>
T cross_entropy(std::span<const T> logits, std::span<const std::int32_t> targets,
                std::span<T> row_loss, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
    for (Index rr = 0; rr < static_cast<Index>(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        const T* lr = logits.data() + r * cols;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, lr[c]);
        T sum = 0;
        for (std::size_t c = 0; c < cols; ++c) sum += std::exp(lr[c] - mx);
        row_loss[r] = std::log(sum) + mx - lr[static_cast<std::size_t>(targets[r])];
    }
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) total += row_loss[r];
    return total / static_cast<T>(rows);
}

template <typename T>
void cross_entropy_backward(std::span<const T> logits, std::span<const std::int32_t> targets,
                            std::span<T> dlogits, std::size_t rows, std::size_t cols, T scale) {
#pragma omp parallel for schedule(static)
    for (Index rr = 0; rr < static_cast<Index>(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        const T* lr = logits.data() + r * cols;
        T* dr = dlogits.data() + r * cols;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, lr[c]);
        T sum = 0;
        for (std::size_t c = 0; c < cols; ++c) sum += std::exp(lr[c] - mx);
        const T inv = T(1) / sum;
        for (std::size_t c = 0; c < cols; ++c) dr[c] += scale * std::exp(lr[c] - mx) * inv;
        dr[static_cast<std::size_t>(targets[r])] -= scale;
    }
}

PATHMOE_INSTANTIATE(float)
PATHMOE_INSTANTIATE(double)

}  // namespace pathmoe::kernels::par
