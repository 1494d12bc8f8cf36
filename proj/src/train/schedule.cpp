// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/train/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pathmoe {

double lr_at(const Schedule& s, std::size_t step) {
    if (step < s.warmup) return s.peak * static_cast<double>(step) / static_cast<double>(s.warmup);
    const double floor = s.peak * s.min_ratio;
    if (s.total <= s.warmup) return step >= s.total && s.total > 0 ? floor : s.peak;
    const double progress = std::min(1.0, static_cast<double>(step - s.warmup) /
                                              static_cast<double>(s.total - s.warmup));
    return floor + (s.peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace pathmoe
