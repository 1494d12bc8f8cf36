// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/model/config.hpp"

#include <string>

#include "pathmoe/common.hpp"

namespace pathmoe {

namespace {

void positive(const char* field, std::size_t v) {
    if (v < 1) throw UsageError(std::string("model.") + field + ": must be positive");
}

template <typename V>
void take(const nlohmann::json& j, const char* key, V& out, const std::string& scope) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception&) {
        throw UsageError(scope + "." + key + ": wrong type");
    }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                    const std::string& scope) {
    if (!j.is_object()) throw UsageError(scope + ": expected an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : keys) known = known || item.key() == k;
        if (!known) throw UsageError(scope + "." + item.key() + ": unknown field");
    }
}

}  // namespace

void ModelConfig::validate(bool allow_empty) const {
    if (layers < 1 && !allow_empty) throw UsageError("model.layers: must be at least 1");
    positive("experts", experts);
    positive("d_model", d_model);
    positive("n_heads", n_heads);
    positive("d_ffn", d_ffn);
    positive("vocab_size", vocab_size);
    positive("seq_len", seq_len);
    if (top_k < 1 || top_k > experts) {
        throw UsageError("model.top_k: " + std::to_string(top_k) + " must lie in [1, experts=" +
                         std::to_string(experts) + "]");
    }
    if (d_model % n_heads != 0) {
        throw UsageError("model.n_heads: d_model " + std::to_string(d_model) +
                         " is not divisible by " + std::to_string(n_heads));
    }
    if (positions == Positions::Rotary && (d_model / n_heads) % 2 != 0) {
        throw UsageError("model.positions: rotary needs an even head dimension");
    }
    if (!(alpha >= 0)) throw UsageError("model.alpha: must be nonnegative");
    if (layers > 0) strategy.validate(layers, d_model);
}

nlohmann::json to_json(const RoutingStrategy& s) {
    return {{"kind", strategy_name(s.kind)},     {"block_size", s.block_size},
            {"rank", s.rank},                    {"proj_dim", s.proj_dim},
            {"tau_init", s.tau_init},            {"compose_xmoe", s.compose_xmoe},
            {"renormalize_gates", s.renormalize_gates}};
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"layers", c.layers},
            {"experts", c.experts},
            {"top_k", c.top_k},
            {"d_model", c.d_model},
            {"n_heads", c.n_heads},
            {"d_ffn", c.d_ffn},
            {"vocab_size", c.vocab_size},
            {"seq_len", c.seq_len},
            {"positions", c.positions == Positions::Rotary ? "rotary" : "learned"},
            {"alpha", c.alpha},
            {"strategy", to_json(c.strategy)}};
}

RoutingStrategy strategy_from_json(const nlohmann::json& j, RoutingStrategy s) {
    const std::string scope = "model.strategy";
    reject_unknown(j, {"kind", "block_size", "rank", "proj_dim", "tau_init", "compose_xmoe",
                       "renormalize_gates"}, scope);
    if (j.contains("kind")) {
        std::string kind;
        take(j, "kind", kind, scope);
        s.kind = parse_strategy(kind);
    }
    take(j, "block_size", s.block_size, scope);
    take(j, "rank", s.rank, scope);
    take(j, "proj_dim", s.proj_dim, scope);
    take(j, "tau_init", s.tau_init, scope);
    take(j, "compose_xmoe", s.compose_xmoe, scope);
    take(j, "renormalize_gates", s.renormalize_gates, scope);
    return s;
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
    const std::string scope = "model";
    reject_unknown(j, {"layers", "experts", "top_k", "d_model", "n_heads", "d_ffn", "vocab_size",
                       "seq_len", "positions", "alpha", "strategy"}, scope);
    take(j, "layers", c.layers, scope);
    take(j, "experts", c.experts, scope);
    take(j, "top_k", c.top_k, scope);
    take(j, "d_model", c.d_model, scope);
    take(j, "n_heads", c.n_heads, scope);
    take(j, "d_ffn", c.d_ffn, scope);
    take(j, "vocab_size", c.vocab_size, scope);
    take(j, "seq_len", c.seq_len, scope);
    take(j, "alpha", c.alpha, scope);
    if (j.contains("positions")) {
        std::string p;
        take(j, "positions", p, scope);
        if (p == "learned") c.positions = Positions::Learned;
        else if (p == "rotary") c.positions = Positions::Rotary;
        else throw UsageError("model.positions: expected learned or rotary, got '" + p + "'");
    }
    if (j.contains("strategy")) c.strategy = strategy_from_json(j.at("strategy"), c.strategy);
    return c;
}

}  // namespace pathmoe
