// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops over Var. Matrices are rank-2 row-major; "rows" means
// the leading axis. Every op rejects mismatched shapes (naming the extents)
// and non-finite inputs.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pathmoe/kernels/types.hpp"
#include "pathmoe/tensor/tensor.hpp"

namespace pathmoe::ops {

/// a[M,K] * b[K,N]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// x[M,K] * w[N,K]^T, the usual weight layout (out_features x in_features).
template <typename T>
Var<T> linear(Var<T> x, Var<T> w);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
/// Same values under a new shape with equal element count.
template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
/// Scalar sum of all elements (fixed left-to-right order).
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> softmax_rows(Var<T> x);
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));
/// tanh-approximated GELU
template <typename T>
Var<T> gelu(Var<T> x);
/// Rows of table[V,D] selected by ids; out-of-range ids are rejected.
template <typename T>
Var<T> embedding(Var<T> table, std::span<const std::int32_t> ids);
/// Causal multi-head scaled dot-product attention over [batch*seq, heads*head_dim].
template <typename T>
Var<T> causal_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t batch, std::size_t seq,
                        std::size_t heads);
/// Rotary position embedding applied per head on [batch*seq, heads*head_dim].
template <typename T>
Var<T> rotary(Var<T> x, std::size_t batch, std::size_t seq, std::size_t heads);
/// Mean negative log-likelihood in nats over rows of logits[M,V].
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets);

/// out[r] = x[rows[r]]
template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::uint32_t> rows);
/// out[M,D] = 0; out[rows[r]] += src[r]
template <typename T>
Var<T> scatter_add_rows(Var<T> src, std::span<const std::uint32_t> rows, std::size_t out_rows);
/// out[r] = flat(x)[index[r]], shape [R]
template <typename T>
Var<T> gather_elements(Var<T> x, std::span<const std::uint32_t> index);
/// out[r, :] = x[r, :] * s[r]
template <typename T>
Var<T> mul_rows(Var<T> x, Var<T> s);
/// Each row scaled to unit L2 norm (norm floored at eps).
template <typename T>
Var<T> l2_normalize_rows(Var<T> x, T eps = T(1e-6));
/// x / s for a single-element s.
template <typename T>
Var<T> div_scalar(Var<T> x, Var<T> s);
/// p * mask renormalised per row; a row with no allowed entry is rejected.
template <typename T>
Var<T> masked_renormalize_rows(Var<T> probs, std::span<const std::uint8_t> mask);
/// N * sum_i fractions[i] * mean_r probs[r, i]; fractions are constants.
template <typename T>
Var<T> load_balance(Var<T> probs, std::span<const T> fractions);

}  // namespace pathmoe::ops
