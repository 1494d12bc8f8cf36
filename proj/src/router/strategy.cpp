// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/router/strategy.hpp"

#include <algorithm>

#include "pathmoe/common.hpp"

namespace pathmoe {

void RoutingStrategy::validate(std::size_t layers, std::size_t d_model) const {
    if (blocked() && (block_size < 1 || block_size > std::max<std::size_t>(layers, 1))) {
        throw UsageError("strategy.block_size: " + std::to_string(block_size) +
                         " must lie in [1, " + std::to_string(layers) + "]");
    }
    if (kind == StrategyKind::LowRank && rank >= d_model) {
        throw UsageError("strategy.rank: " + std::to_string(rank) + " must be below d_model " +
                         std::to_string(d_model));
    }
    if (uses_xmoe()) {
        if (proj_dim < 1) throw UsageError("strategy.proj_dim: must be positive");
        if (!(tau_init > 0)) throw UsageError("strategy.tau_init: must be positive");
    }
    if (compose_xmoe && kind != StrategyKind::PathShared) {
        throw UsageError("strategy.compose_xmoe: only valid with the path strategy");
    }
}

StrategyKind parse_strategy(std::string_view name) {
    if (name == "indep") return StrategyKind::Independent;
    if (name == "path") return StrategyKind::PathShared;
    if (name == "mono") return StrategyKind::MonoShared;
    if (name == "lowrank") return StrategyKind::LowRank;
    if (name == "xmoe") return StrategyKind::XMoE;
    if (name == "rand") return StrategyKind::RandomFrozen;
    throw UsageError("strategy: unknown name '" + std::string(name) +
                     "' (expected indep, path, mono, lowrank, xmoe or rand)");
}

std::string strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::Independent: return "indep";
        case StrategyKind::PathShared: return "path";
        case StrategyKind::MonoShared: return "mono";
        case StrategyKind::LowRank: return "lowrank";
        case StrategyKind::XMoE: return "xmoe";
        case StrategyKind::RandomFrozen: return "rand";
    }
    return "indep";
}

std::size_t router_slot(const RoutingStrategy& s, std::size_t layer) {
    if (s.blocked()) return layer / s.block_size;
    if (s.kind == StrategyKind::LowRank) return 0;
    return layer;
}

std::size_t router_slot_count(const RoutingStrategy& s, std::size_t layers) {
    if (layers == 0) return 0;
    return router_slot(s, layers - 1) + 1;
}

std::size_t decision_source(const RoutingStrategy& s, std::size_t layer) {
    if (s.kind == StrategyKind::MonoShared) return (layer / s.block_size) * s.block_size;
    return layer;
}

std::vector<std::size_t> decision_sources(const RoutingStrategy& s, std::size_t layers) {
    std::vector<std::size_t> out(layers);
    for (std::size_t l = 0; l < layers; ++l) out[l] = decision_source(s, l);
    return out;
}

}  // namespace pathmoe
