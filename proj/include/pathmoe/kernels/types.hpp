// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace pathmoe::kernels {

/// Geometry of a batch of causal self-attention problems.
/// q, k, v, out are [batch * seq, heads * head_dim]; probs is [batch, heads, seq, seq].
struct AttentionDims {
    std::size_t batch = 0;
    std::size_t seq = 0;
    std::size_t heads = 0;
    std::size_t head_dim = 0;
};

/// Worker count used by par:: kernels (OpenMP max threads).
int worker_count();
void set_worker_count(int n);

}  // namespace pathmoe::kernels
