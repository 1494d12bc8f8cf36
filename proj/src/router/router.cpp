// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/router/router.hpp"

#include <algorithm>

#include "pathmoe/tensor/ops.hpp"

namespace pathmoe {

namespace {

template <typename T>
Parameter<T> init_param(std::string name, Shape shape, Rng& rng, double std) {
    Parameter<T> p(std::move(name), std::move(shape));
    for (T& v : p.value) v = static_cast<T>(rng.truncated_normal(std));
    return p;
}

constexpr double kInitStd = 0.02;
constexpr double kMinTau = 1e-3;

}  // namespace

template <typename T>
Decision<T> top_k_select(std::span<const T> probs, std::size_t k) {
    if (k < 1 || k > probs.size()) {
        throw UsageError("top_k_select: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(probs.size()) + "]");
    }
    Decision<T> d;
    d.indices.resize(k);
    top_k_rows<T>(probs, 1, probs.size(), k, d.indices);
    for (auto i : d.indices) d.gates.push_back(probs[i]);
    return d;
}

template <typename T>
void top_k_rows(std::span<const T> probs, std::size_t rows, std::size_t n, std::size_t k,
                std::span<std::uint32_t> out) {
    if (k < 1 || k > n) {
        throw UsageError("top_k: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    }
    std::vector<std::uint8_t> taken(n);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* p = probs.data() + r * n;
        std::fill(taken.begin(), taken.end(), std::uint8_t{0});
        for (std::size_t j = 0; j < k; ++j) {
            std::size_t best = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                if (best == n || p[i] > p[best]) best = i;
            }
            taken[best] = 1;
            out[r * k + j] = static_cast<std::uint32_t>(best);
        }
    }
}

template <typename T>
void restricted_top_k(std::span<const T> probs, std::span<const std::uint8_t> allowed,
                      std::size_t k, std::span<std::uint32_t> out) {
    const std::size_t n = probs.size();
    if (k < 1 || k > n) {
        throw UsageError("top_k: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    }
    std::size_t top = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (allowed[i] && (top == n || probs[i] > probs[top])) top = i;
    }
    if (top == n) throw UsageError("restricted_top_k: no expert allowed");
    out[0] = static_cast<std::uint32_t>(top);
    std::vector<std::uint8_t> taken(n);
    taken[top] = 1;
    for (std::size_t j = 1; j < k; ++j) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (best == n || probs[i] > probs[best]) best = i;
        }
        taken[best] = 1;
        out[j] = static_cast<std::uint32_t>(best);
    }
}

template <typename T>
RouterBank<T>::RouterBank(const RoutingStrategy& strategy, std::size_t layers, std::size_t experts,
                          std::size_t d_model, Rng& rng)
    : strategy_(strategy), layers_(layers), experts_(experts), d_model_(d_model) {
    strategy_.validate(layers, d_model);
    if (experts < 1) throw UsageError("router: need at least one expert");
    const std::size_t slots = router_slot_count(strategy_, layers);
    if (strategy_.uses_xmoe()) {
        for (std::size_t s = 0; s < slots; ++s) {
            const auto tag = std::to_string(s);
            proj_.push_back(init_param<T>("router.xmoe.proj." + tag, {strategy_.proj_dim, d_model}, rng, kInitStd));
            emb_.push_back(init_param<T>("router.xmoe.emb." + tag, {experts, strategy_.proj_dim}, rng, kInitStd));
            Parameter<T> tau("router.xmoe.tau." + tag, {1});
            tau.value[0] = static_cast<T>(strategy_.tau_init);
            tau_.push_back(std::move(tau));
        }
        return;
    }
    for (std::size_t s = 0; s < slots; ++s) {
        w_.push_back(init_param<T>("router.w." + std::to_string(s), {experts, d_model}, rng, kInitStd));
        if (strategy_.kind == StrategyKind::RandomFrozen) w_.back().trainable = false;
    }
    if (strategy_.kind == StrategyKind::LowRank && strategy_.rank > 0) {
        for (std::size_t l = 0; l < layers; ++l) {
            const auto tag = std::to_string(l);
            low_u_.push_back(init_param<T>("router.lowrank.u." + tag, {experts, strategy_.rank}, rng, kInitStd));
            low_v_.push_back(init_param<T>("router.lowrank.v." + tag, {strategy_.rank, d_model}, rng, kInitStd));
        }
    }
}

template <typename T>
std::vector<Parameter<T>*> RouterBank<T>::parameters() {
    std::vector<Parameter<T>*> out;
    for (auto* group : {&w_, &low_u_, &low_v_, &proj_, &emb_, &tau_}) {
        for (auto& p : *group) out.push_back(&p);
    }
    return out;
}

template <typename T>
void RouterBank<T>::check_layer(std::size_t layer) const {
    if (layer >= layers_) {
        throw UsageError("router: layer " + std::to_string(layer + 1) + " outside [1, " +
                         std::to_string(layers_) + "]");
    }
}

template <typename T>
std::size_t RouterBank<T>::xmoe_slot(std::size_t layer) const {
    return router_slot(strategy_, layer);
}

template <typename T>
Var<T> RouterBank<T>::logits(ParamBinder<T>& bind, Var<T> u, std::size_t layer) {
    check_layer(layer);
    if (strategy_.uses_xmoe()) {
        const std::size_t s = xmoe_slot(layer);
        if (!(tau_[s].value[0] > T(0))) {
            throw UsageError("router: X-MoE temperature must be positive, got " +
                             std::to_string(static_cast<double>(tau_[s].value[0])));
        }
        auto z = ops::l2_normalize_rows(ops::linear(u, bind(proj_[s])));
        auto e = ops::l2_normalize_rows(bind(emb_[s]));
        return ops::div_scalar(ops::linear(z, e), bind(tau_[s]));
    }
    auto out = ops::linear(u, bind(w_[router_slot(strategy_, layer)]));
    if (!low_u_.empty()) {
        out = ops::add(out, ops::linear(ops::linear(u, bind(low_v_[layer])), bind(low_u_[layer])));
    }
    return out;
}

template <typename T>
std::vector<T> RouterBank<T>::route_probs(std::span<const T> x, std::size_t layer) {
    if (x.size() != d_model_) {
        throw ShapeError("route_probs: input of length " + std::to_string(x.size()) +
                         " for d_model " + std::to_string(d_model_));
    }
    Tape<T> tape;
    tape.set_grad_enabled(false);
    ParamBinder<T> bind(tape);
    auto u = tape.constant({1, d_model_}, std::vector<T>(x.begin(), x.end()));
    auto p = probs(bind, u, layer);
    return {p.data().begin(), p.data().end()};
}

template <typename T>
void RouterBank<T>::clamp_temperature() {
    for (auto& t : tau_) t.value[0] = std::max(t.value[0], static_cast<T>(kMinTau));
}

template <typename T>
Var<T> Expert<T>::apply(ParamBinder<T>& bind, Var<T> x) {
    return ops::linear(ops::gelu(ops::linear(x, bind(w_in))), bind(w_out));
}

template <typename T>
Var<T> combine_experts(ParamBinder<T>& bind, Var<T> x, std::span<const std::uint32_t> topk,
                       std::size_t k, Var<T> gates, std::vector<Expert<T>>& experts,
                       std::span<const std::uint32_t> expert_map) {
    const std::size_t rows = x.dim(0);
    const std::size_t n = experts.size();
    if (topk.size() != rows * k || gates.numel() != rows * k) {
        throw ShapeError("combine_experts: " + std::to_string(topk.size()) + " indices and " +
                         std::to_string(gates.numel()) + " gates for " + std::to_string(rows) +
                         " rows with k=" + std::to_string(k));
    }
    if (!expert_map.empty() && expert_map.size() != n) {
        throw ShapeError("combine_experts: expert map of length " + std::to_string(expert_map.size()) +
                         " for " + std::to_string(n) + " experts");
    }
    std::vector<std::vector<std::uint32_t>> slots(n);
    for (std::size_t s = 0; s < topk.size(); ++s) {
        std::uint32_t e = topk[s];
        if (e >= n) {
            throw UsageError("combine_experts: expert " + std::to_string(e) + " outside [0, " +
                             std::to_string(n) + ")");
        }
        if (!expert_map.empty()) e = expert_map[e];
        slots[e].push_back(static_cast<std::uint32_t>(s));
    }
    Var<T> y;
    for (std::size_t e = 0; e < n; ++e) {
        if (slots[e].empty()) continue;
        std::vector<std::uint32_t> rows_e(slots[e].size());
        for (std::size_t j = 0; j < rows_e.size(); ++j)
            rows_e[j] = static_cast<std::uint32_t>(slots[e][j] / k);
        auto g = ops::gather_elements(gates, std::span<const std::uint32_t>(slots[e]));
        auto out = ops::mul_rows(experts[e].apply(bind, ops::gather_rows(x, std::span<const std::uint32_t>(rows_e))), g);
        auto scattered = ops::scatter_add_rows(out, std::span<const std::uint32_t>(rows_e), rows);
        y = y.valid() ? ops::add(y, scattered) : scattered;
    }
    return y;
}

template <typename T>
std::vector<T> assignment_fractions(std::span<const std::uint32_t> topk, std::size_t rows,
                                    std::size_t k, std::size_t experts) {
    if (rows == 0) throw UsageError("load balance: empty batch");
    std::vector<std::size_t> counts(experts, 0);
    for (auto e : topk) {
        if (e >= experts) throw UsageError("load balance: expert " + std::to_string(e) + " out of range");
        ++counts[e];
    }
    std::vector<T> f(experts);
    const double total = static_cast<double>(rows * k);
    for (std::size_t i = 0; i < experts; ++i) f[i] = static_cast<T>(static_cast<double>(counts[i]) / total);
    return f;
}

template <typename T>
double load_balance_value(const LayerRouting<T>& r, double alpha) {
    const auto f = assignment_fractions<T>(r.topk, r.rows, r.top_k, r.experts);
    double total = 0;
    for (std::size_t i = 0; i < r.experts; ++i) {
        double mean_p = 0;
        for (std::size_t row = 0; row < r.rows; ++row) mean_p += static_cast<double>(r.probs[row * r.experts + i]);
        mean_p /= static_cast<double>(r.rows);
        total += static_cast<double>(f[i]) * mean_p;
    }
    return alpha * static_cast<double>(r.experts) * total;
}

template <typename T>
Var<T> load_balance_loss(Var<T> probs, std::span<const std::uint32_t> topk, std::size_t k) {
    const std::size_t rows = probs.dim(0), n = probs.dim(1);
    if (topk.size() != rows * k) {
        throw ShapeError("load_balance_loss: " + std::to_string(topk.size()) + " indices for probs " +
                         shape_str(probs.shape()) + " with k=" + std::to_string(k));
    }
    const auto f = assignment_fractions<T>(topk, rows, k, n);
    return ops::load_balance(probs, std::span<const T>(f));
}

template <typename T>
double max_load_ratio(const LayerRouting<T>& r) {
    if (r.rows == 0) return 0.0;
    std::vector<std::size_t> counts(r.experts, 0);
    for (auto e : r.topk) ++counts[e];
    const double mean = static_cast<double>(r.rows * r.top_k) / static_cast<double>(r.experts);
    return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / mean;
}

#define PATHMOE_ROUTER_INSTANTIATE(T)                                                              \
    template Decision<T> top_k_select<T>(std::span<const T>, std::size_t);                         \
    template void top_k_rows<T>(std::span<const T>, std::size_t, std::size_t, std::size_t,         \
                                std::span<std::uint32_t>);                                         \
    template void restricted_top_k<T>(std::span<const T>, std::span<const std::uint8_t>,           \
                                      std::size_t, std::span<std::uint32_t>);                      \
    template class RouterBank<T>;                                                                  \
    template struct Expert<T>;                                                                     \
    template Var<T> combine_experts<T>(ParamBinder<T>&, Var<T>, std::span<const std::uint32_t>,    \
                                       std::size_t, Var<T>, std::vector<Expert<T>>&,               \
                                       std::span<const std::uint32_t>);                            \
    template std::vector<T> assignment_fractions<T>(std::span<const std::uint32_t>, std::size_t,   \
                                                    std::size_t, std::size_t);                     \
    template double load_balance_value<T>(const LayerRouting<T>&, double);                         \
    template Var<T> load_balance_loss<T>(Var<T>, std::span<const std::uint32_t>, std::size_t);     \
    template double max_load_ratio<T>(const LayerRouting<T>&);

PATHMOE_ROUTER_INSTANTIATE(float)
PATHMOE_ROUTER_INSTANTIATE(double)

}  // namespace pathmoe
