// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "json.hpp"
#include "pathmoe/router/strategy.hpp"

namespace pathmoe {

enum class Positions { Learned, Rotary };

struct ModelConfig {
    std::size_t layers = 8;
    std::size_t experts = 8;
    std::size_t top_k = 2;
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t d_ffn = 128;
    std::size_t vocab_size = 256;
    std::size_t seq_len = 128;
    Positions positions = Positions::Learned;
    RoutingStrategy strategy;
    /// Weight of the load-balancing term; 0 trains on cross-entropy alone.
    double alpha = 0.01;

    /// Throws UsageError naming the field. `allow_empty` admits layers == 0.
    void validate(bool allow_empty = false) const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const RoutingStrategy& s);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
RoutingStrategy strategy_from_json(const nlohmann::json& j, RoutingStrategy base = {});

}  // namespace pathmoe
