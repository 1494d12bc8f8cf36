// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace pathmoe {

struct Schedule {
    double peak = 3e-4;
    std::size_t warmup = 100;
    std::size_t total = 3000;
    /// Cosine floor as a fraction of peak.
    double min_ratio = 0.1;
};

/// Linear warmup 0 -> peak, then cosine peak -> peak*min_ratio at `total`.
double lr_at(const Schedule& s, std::size_t step);

}  // namespace pathmoe
