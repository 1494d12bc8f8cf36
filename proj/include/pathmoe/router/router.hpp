// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Router weights for every strategy, top-k selection, expert combination and
// the auxiliary load-balancing loss. Layers are 0-based here.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pathmoe/common.hpp"
#include "pathmoe/router/strategy.hpp"
#include "pathmoe/tensor/binder.hpp"
#include "pathmoe/tensor/ops.hpp"
#include "pathmoe/tensor/tensor.hpp"

namespace pathmoe {

/// One layer's routing for a batch of rows.
template <typename T>
struct LayerRouting {
    std::size_t rows = 0, experts = 0, top_k = 0;
    std::vector<T> probs;              // [rows * experts]
    std::vector<std::uint32_t> topk;   // [rows * top_k], descending by selection order
    std::vector<T> gates;              // [rows * top_k]

    std::uint32_t top1(std::size_t row) const { return topk[row * top_k]; }
};

template <typename T>
struct Decision {
    std::vector<std::uint32_t> indices;
    std::vector<T> gates;
};

/// k largest entries, ties to the lowest index; gates are the raw probs.
template <typename T>
Decision<T> top_k_select(std::span<const T> probs, std::size_t k);

/// Row-wise top_k_select over probs[rows, n] into out[rows * k].
template <typename T>
void top_k_rows(std::span<const T> probs, std::size_t rows, std::size_t n, std::size_t k,
                std::span<std::uint32_t> out);

/// Top-1 restricted to `allowed` (nonzero entries), the other k-1 picked from
/// all experts except the top-1. Throws if nothing is allowed.
template <typename T>
void restricted_top_k(std::span<const T> probs, std::span<const std::uint8_t> allowed,
                      std::size_t k, std::span<std::uint32_t> out);

template <typename T>
class RouterBank {
public:
    RouterBank() = default;
    RouterBank(const RoutingStrategy& strategy, std::size_t layers, std::size_t experts,
               std::size_t d_model, Rng& rng);

    const RoutingStrategy& strategy() const { return strategy_; }
    std::size_t layers() const { return layers_; }
    std::size_t experts() const { return experts_; }
    std::size_t d_model() const { return d_model_; }

    std::vector<Parameter<T>*> parameters();
    /// Weight matrix of a routing slot; Independent/PathShared/Mono/Rand/LowRank.
    Parameter<T>& slot_weight(std::size_t slot) { return w_.at(slot); }
    std::size_t weight_slots() const { return w_.size(); }

    /// Router logits for u[rows, d] at `layer`.
    Var<T> logits(ParamBinder<T>& bind, Var<T> u, std::size_t layer);
    Var<T> probs(ParamBinder<T>& bind, Var<T> u, std::size_t layer) {
        return ops::softmax_rows(logits(bind, u, layer));
    }
    /// Probabilities for a single d-vector, without gradients.
    std::vector<T> route_probs(std::span<const T> x, std::size_t layer);

    /// Floors every X-MoE temperature at 1e-3 (call after each optimizer step).
    void clamp_temperature();

private:
    void check_layer(std::size_t layer) const;
    std::size_t xmoe_slot(std::size_t layer) const;

    RoutingStrategy strategy_;
    std::size_t layers_ = 0, experts_ = 0, d_model_ = 0;
    std::vector<Parameter<T>> w_;
    std::vector<Parameter<T>> low_u_, low_v_;
    std::vector<Parameter<T>> proj_, emb_, tau_;
};

/// Two-layer GELU feed-forward expert without biases.
template <typename T>
struct Expert {
    Parameter<T> w_in;   // [d_ffn, d]
    Parameter<T> w_out;  // [d, d_ffn]

    Var<T> apply(ParamBinder<T>& bind, Var<T> x);
};

/// y[r] = sum_j gates[r*k+j] * F_{map(topk[r*k+j])}(x[r]). `gates` is flat
/// [rows*k]. `expert_map`, when nonempty, redirects selected index e to
/// expert expert_map[e] (used by permutation experiments).
template <typename T>
Var<T> combine_experts(ParamBinder<T>& bind, Var<T> x, std::span<const std::uint32_t> topk,
                       std::size_t k, Var<T> gates, std::vector<Expert<T>>& experts,
                       std::span<const std::uint32_t> expert_map = {});

/// f_i: share of the rows*k assignments that went to expert i (sums to 1).
template <typename T>
std::vector<T> assignment_fractions(std::span<const std::uint32_t> topk, std::size_t rows,
                                    std::size_t k, std::size_t experts);

/// alpha * N * sum_i f_i P_i for one layer, from recorded values.
template <typename T>
double load_balance_value(const LayerRouting<T>& routing, double alpha);

/// N * sum_i f_i P_i for one layer on the tape (alpha applied by the caller).
template <typename T>
Var<T> load_balance_loss(Var<T> probs, std::span<const std::uint32_t> topk, std::size_t k);

/// max_i load_i / mean_i load_i over the top-k assignments of one layer.
template <typename T>
double max_load_ratio(const LayerRouting<T>& routing);

}  // namespace pathmoe
