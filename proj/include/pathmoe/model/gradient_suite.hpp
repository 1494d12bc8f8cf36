// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pathmoe {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0;
};

/// Double-precision central-difference checks (eps 1e-5) of every
/// differentiable op and of the full loss of small one- and two-layer MoE
/// models under each routing strategy.
std::vector<GradCheckEntry> gradient_suite(std::uint64_t seed = 1);

}  // namespace pathmoe
