// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/kernels/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "instantiate.hpp"

namespace pathmoe::kernels::ref {

template <typename T>
void matmul_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * cols;
        T* yr = y.data() + r * cols;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, xr[c]);
        T sum = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            sum += yr[c];
        }
        for (std::size_t c = 0; c < cols; ++c) yr[c] /= sum;
    }
}

template <typename T>
void softmax_rows_backward(std::span<const T> y, std::span<const T> dy, std::span<T> dx,
                           std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::size_t c = 0; c < cols; ++c) dot += dy[r * cols + c] * y[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
            dx[r * cols + c] += y[r * cols + c] * (dy[r * cols + c] - dot);
    }
}

template <typename T>
void layer_norm(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                std::span<T> y, std::span<T> mean, std::span<T> rstd, std::size_t rows,
                std::size_t cols, T eps) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * cols;
        T mu = 0;
        for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
        mu /= static_cast<T>(cols);
        T var = 0;
        for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= static_cast<T>(cols);
        const T rs = T(1) / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
    }
}

template <typename T>
void layer_norm_backward(std::span<const T> x, std::span<const T> gamma,
                         std::span<const T> mean, std::span<const T> rstd,
                         std::span<const T> dy, std::span<T> dx, std::span<T> dgamma,
                         std::span<T> dbeta, std::size_t rows, std::size_t cols) {
    const T inv_n = T(1) / static_cast<T>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        T sum_g = 0, sum_gx = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            const T xhat = (x[r * cols + c] - mean[r]) * rstd[r];
            const T g = dy[r * cols + c] * gamma[c];
            sum_g += g;
            sum_gx += g * xhat;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            const T xhat = (x[r * cols + c] - mean[r]) * rstd[r];
            const T g = dy[r * cols + c] * gamma[c];
            dx[r * cols + c] += rstd[r] * (g - sum_g * inv_n - xhat * sum_gx * inv_n);
        }
    }
    for (std::size_t c = 0; c < cols; ++c) {
        T dg = 0, db = 0;
        for (std::size_t r = 0; r < rows; ++r) {
            const T xhat = (x[r * cols + c] - mean[r]) * rstd[r];
            dg += dy[r * cols + c] * xhat;
            db += dy[r * cols + c];
        }
        dgamma[c] += dg;
        dbeta[c] += db;
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
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x[i];
        y[i] = T(0.5) * v * (T(1) + std::tanh(kGeluC<T> * (v + kGeluA<T> * v * v * v)));
    }
}

template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx) {
    for (std::size_t i = 0; i < x.size(); ++i) {
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
    const T scale = T(1) / std::sqrt(static_cast<T>(d.head_dim));
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t h = 0; h < d.heads; ++h) {
            T* p = probs.data() + (b * d.heads + h) * d.seq * d.seq;
            for (std::size_t i = 0; i < d.seq; ++i) {
                const T* qi = q.data() + (b * d.seq + i) * width + h * d.head_dim;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j <= i; ++j) {
                    const T* kj = k.data() + (b * d.seq + j) * width + h * d.head_dim;
                    T s = 0;
                    for (std::size_t e = 0; e < d.head_dim; ++e) s += qi[e] * kj[e];
                    p[i * d.seq + j] = s * scale;
                    mx = std::max(mx, s * scale);
                }
                T sum = 0;
                for (std::size_t j = 0; j <= i; ++j) {
                    p[i * d.seq + j] = std::exp(p[i * d.seq + j] - mx);
                    sum += p[i * d.seq + j];
                }
                for (std::size_t j = 0; j <= i; ++j) p[i * d.seq + j] /= sum;
                for (std::size_t j = i + 1; j < d.seq; ++j) p[i * d.seq + j] = 0;
                T* oi = out.data() + (b * d.seq + i) * width + h * d.head_dim;
                for (std::size_t e = 0; e < d.head_dim; ++e) {
                    T acc = 0;
                    for (std::size_t j = 0; j <= i; ++j)
                        acc += p[i * d.seq + j] * v[(b * d.seq + j) * width + h * d.head_dim + e];
                    oi[e] = acc;
                }
            }
        }
    }
}

template <typename T>
void causal_attention_backward(std::span<const T> q, std::span<const T> k,
                               std::span<const T> v, std::span<const T> probs,
                               std::span<const T> dout, std::span<T> dq, std::span<T> dk,
                               std::span<T> dv, const AttentionDims& d) {
    const std::size_t width = d.heads * d.head_dim;
    const T scale = T(1) / std::sqrt(static_cast<T>(d.head_dim));
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t h = 0; h < d.heads; ++h) {
            const T* p = probs.data() + (b * d.heads + h) * d.seq * d.seq;
            auto at = [&](std::size_t pos) { return (b * d.seq + pos) * width + h * d.head_dim; };
            for (std::size_t i = 0; i < d.seq; ++i) {
                std::vector<T> dp(i + 1);
                T row_dot = 0;
                for (std::size_t j = 0; j <= i; ++j) {
                    T s = 0;
                    for (std::size_t e = 0; e < d.head_dim; ++e) s += dout[at(i) + e] * v[at(j) + e];
                    dp[j] = s;
                    row_dot += s * p[i * d.seq + j];
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    const T pij = p[i * d.seq + j];
                    const T ds = pij * (dp[j] - row_dot) * scale;
                    for (std::size_t e = 0; e < d.head_dim; ++e) {
                        dv[at(j) + e] += pij * dout[at(i) + e];
                        dq[at(i) + e] += ds * k[at(j) + e];
                        dk[at(j) + e] += ds * q[at(i) + e];
                    }
                }
            }
        }
    }
}

template <typename T>
T cross_entropy(std::span<const T> logits, std::span<const std::int32_t> targets,
                std::span<T> row_loss, std::size_t rows, std::size_t cols) {
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* lr = logits.data() + r * cols;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, lr[c]);
        T sum = 0;
        for (std::size_t c = 0; c < cols; ++c) sum += std::exp(lr[c] - mx);
        row_loss[r] = std::log(sum) + mx - lr[static_cast<std::size_t>(targets[r])];
        total += row_loss[r];
    }
    return total / static_cast<T>(rows);
}

template <typename T>
void cross_entropy_backward(std::span<const T> logits, std::span<const std::int32_t> targets,
                            std::span<T> dlogits, std::size_t rows, std::size_t cols, T scale) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* lr = logits.data() + r * cols;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, lr[c]);
        T sum = 0;
        for (std::size_t c = 0; c < cols; ++c) sum += std::exp(lr[c] - mx);
        for (std::size_t c = 0; c < cols; ++c) {
            const T pr = std::exp(lr[c] - mx) / sum;
            const T onehot = static_cast<std::size_t>(targets[r]) == c ? T(1) : T(0);
            dlogits[r * cols + c] += scale * (pr - onehot);
        }
    }
}

PATHMOE_INSTANTIATE(float)
PATHMOE_INSTANTIATE(double)

}  // namespace pathmoe::kernels::ref
