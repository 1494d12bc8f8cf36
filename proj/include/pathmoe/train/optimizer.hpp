// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "pathmoe/model/checkpoint.hpp"
#include "pathmoe/tensor/tensor.hpp"

namespace pathmoe {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    /// Decoupled; applied to matrices (rank >= 2) only.
    double weight_decay = 0.1;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 1.0;
};

/// AdamW over a fixed parameter list. Frozen parameters are skipped.
class AdamW {
public:
    AdamW(std::vector<Parameter<float>*> params, AdamWConfig config);

    /// Clips, then updates every trainable parameter. Returns the pre-clip
    /// gradient norm.
    double step(double lr);
    std::uint64_t steps_taken() const { return t_; }

    /// Moments as named arrays "adam.m.<param>" / "adam.v.<param>".
    void export_state(std::vector<NamedArray>& out) const;
    void import_state(const Checkpoint& ckpt, std::uint64_t steps_taken);

private:
    std::vector<Parameter<float>*> params_;
    AdamWConfig config_;
    std::vector<std::vector<float>> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace pathmoe
