// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels. Straight loops, no blocking; kept for testing the
// parallel kernels and as the baseline in the benchmark.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "pathmoe/kernels/types.hpp"

namespace pathmoe::kernels::ref {

// C (+)= A[M,K] * B[K,N]
template <typename T>
void matmul_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
// C (+)= A[M,K] * B[N,K]^T
template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
// C (+)= A[K,M]^T * B[K,N]
template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols);
// dx += y * (dy - <dy, y>)
template <typename T>
void softmax_rows_backward(std::span<const T> y, std::span<const T> dy, std::span<T> dx,
                           std::size_t rows, std::size_t cols);
template <typename T>
void layer_norm(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                std::span<T> y, std::span<T> mean, std::span<T> rstd, std::size_t rows,
                std::size_t cols, T eps);
// accumulates into dx, dgamma, dbeta
template <typename T>
void layer_norm_backward(std::span<const T> x, std::span<const T> gamma,
                         std::span<const T> mean, std::span<const T> rstd,
                         std::span<const T> dy, std::span<T> dx, std::span<T> dgamma,
                         std::span<T> dbeta, std::size_t rows, std::size_t cols);
template <typename T>
void gelu(std::span<const T> x, std::span<T> y);
template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx);
template <typename T>
void causal_attention(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                      std::span<T> out, std::span<T> probs, const AttentionDims& dims);
// accumulates into dq, dk, dv
template <typename T>
void causal_attention_backward(std::span<const T> q, std::span<const T> k,
                               std::span<const T> v, std::span<const T> probs,
                               std::span<const T> dout, std::span<T> dq, std::span<T> dk,
                               std::span<T> dv, const AttentionDims& dims);
// per-row negative log-likelihood; returns the mean over rows
template <typename T>
T cross_entropy(std::span<const T> logits, std::span<const std::int32_t> targets,
                std::span<T> row_loss, std::size_t rows, std::size_t cols);
// dlogits += scale * (softmax(logits) - onehot(target))
template <typename T>
void cross_entropy_backward(std::span<const T> logits, std::span<const std::int32_t> targets,
                            std::span<T> dlogits, std::size_t rows, std::size_t cols,
                            T scale);

}  // namespace pathmoe::kernels::ref
