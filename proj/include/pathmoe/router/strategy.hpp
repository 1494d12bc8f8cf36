// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace pathmoe {

enum class StrategyKind { Independent, PathShared, MonoShared, LowRank, XMoE, RandomFrozen };

struct RoutingStrategy {
    StrategyKind kind = StrategyKind::Independent;
    /// Layers per shared router (PathShared, MonoShared).
    std::size_t block_size = 1;
    /// Rank of the per-layer perturbation (LowRank).
    std::size_t rank = 4;
    /// Width of the cosine-scoring space (XMoE, or PathShared with compose_xmoe).
    std::size_t proj_dim = 16;
    double tau_init = 0.07;
    /// PathShared only: score with X-MoE cosine similarity, one projection per block.
    bool compose_xmoe = false;
    /// Divide the selected gates by their sum. Off by default.
    bool renormalize_gates = false;

    bool uses_xmoe() const {
        return kind == StrategyKind::XMoE || (kind == StrategyKind::PathShared && compose_xmoe);
    }
    bool blocked() const {
        return kind == StrategyKind::PathShared || kind == StrategyKind::MonoShared;
    }

    /// Throws UsageError naming the offending field.
    void validate(std::size_t layers, std::size_t d_model) const;
};

/// CLI names: indep, path, mono, lowrank, xmoe, rand.
StrategyKind parse_strategy(std::string_view name);
std::string strategy_name(StrategyKind kind);

/// Router slot used by 0-based layer l: l/B for blocked strategies, 0 for
/// LowRank's shared matrix, l otherwise.
std::size_t router_slot(const RoutingStrategy& s, std::size_t layer);
std::size_t router_slot_count(const RoutingStrategy& s, std::size_t layers);

/// Layer whose routing decision layer l uses. Under MonoShared this is the
/// first layer of l's block; every other strategy decides at each layer.
std::size_t decision_source(const RoutingStrategy& s, std::size_t layer);
std::vector<std::size_t> decision_sources(const RoutingStrategy& s, std::size_t layers);

}  // namespace pathmoe
