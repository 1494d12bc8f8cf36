// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "pathmoe/router/router.hpp"
#include "pathmoe/tensor/grad_check.hpp"
#include "support/random.hpp"

using namespace pathmoe;
using pathmoe::testing::random_values;

namespace {

RoutingStrategy make(StrategyKind kind, std::size_t block = 1) {
    RoutingStrategy s;
    s.kind = kind;
    s.block_size = block;
    return s;
}

std::vector<double> softmax(const std::vector<double>& z) {
    double m = *std::max_element(z.begin(), z.end()), sum = 0;
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) sum += out[i] = std::exp(z[i] - m);
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace

TEST_CASE("zero router weights give uniform probabilities") {
    Rng rng(1);
    RouterBank<double> bank(make(StrategyKind::Independent), 3, 4, 5, rng);
    for (auto* p : bank.parameters()) std::fill(p->value.begin(), p->value.end(), 0.0);
    for (double v : bank.route_probs(random_values(5, 2), 1)) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("route_probs matches softmax(W x) and sums to one") {
    Rng rng(2);
    RouterBank<double> bank(make(StrategyKind::PathShared, 2), 4, 6, 5, rng);
    const auto x = random_values(5, 3, 20.0);
    const auto& w = bank.slot_weight(1).value;
    std::vector<double> z(6, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 5; ++j) z[i] += w[i * 5 + j] * x[j];
    const auto want = softmax(z);
    const auto got = bank.route_probs(x, 3);
    double total = 0;
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        total += got[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK_THROWS_AS(bank.route_probs(x, 4), UsageError);
}

TEST_CASE("low-rank router with rank 0 equals the shared router") {
    Rng a(3), b(3);
    auto s = make(StrategyKind::LowRank);
    s.rank = 0;
    RouterBank<double> low(s, 4, 4, 6, a);
    RouterBank<double> shared(make(StrategyKind::PathShared, 4), 4, 4, 6, b);
    CHECK(low.parameters().size() == 1);
    const auto x = random_values(6, 4, 10.0);
    for (std::size_t l = 0; l < 4; ++l) CHECK(low.route_probs(x, l) == shared.route_probs(x, l));
}

TEST_CASE("low-rank router adds U_l V_l x") {
    Rng rng(4);
    auto s = make(StrategyKind::LowRank);
    s.rank = 2;
    RouterBank<double> bank(s, 2, 3, 4, rng);
    auto params = bank.parameters();
    REQUIRE(params.size() == 5);  // W, U_0, U_1, V_0, V_1
    const auto x = random_values(4, 5, 10.0);
    const auto& w = params[0]->value;
    const auto& u = params[2]->value;  // U_1 [3,2]
    const auto& v = params[4]->value;  // V_1 [2,4]
    std::vector<double> vx(2, 0.0), z(3, 0.0);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t j = 0; j < 4; ++j) vx[r] += v[r * 4 + j] * x[j];
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) z[i] += w[i * 4 + j] * x[j];
        for (std::size_t r = 0; r < 2; ++r) z[i] += u[i * 2 + r] * vx[r];
    }
    const auto want = softmax(z);
    const auto got = bank.route_probs(x, 1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    s.rank = 4;
    CHECK_THROWS_AS(RouterBank<double>(s, 2, 3, 4, rng), UsageError);
}

TEST_CASE("X-MoE cosine scoring: aligned expert wins and logits scale as 1/tau") {
    Rng rng(5);
    auto s = make(StrategyKind::XMoE);
    s.proj_dim = 3;
    s.tau_init = 0.5;
    RouterBank<double> bank(s, 1, 3, 3, rng);
    auto params = bank.parameters();  // proj, emb, tau
    REQUIRE(params.size() == 3);
    params[0]->value = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    params[1]->value = {0, 2, 0, 0, 0, 3, 5, 0, 0};  // experts along y, z, x
    const std::vector<double> x{0.0, 0.0, 4.0};
    auto p = bank.route_probs(x, 0);
    CHECK(p[1] > p[0]);
    CHECK(p[1] > p[2]);
    CHECK(std::log(p[1] / p[0]) == doctest::Approx(1.0 / 0.5));
    params[2]->value[0] = 0.25;
    p = bank.route_probs(x, 0);
    CHECK(std::log(p[1] / p[0]) == doctest::Approx(1.0 / 0.25));
    params[2]->value[0] = 0.0;
    CHECK_THROWS_AS(bank.route_probs(x, 0), UsageError);
    params[2]->value[0] = -1.0;
    bank.clamp_temperature();
    CHECK(params[2]->value[0] == doctest::Approx(1e-3));
}

TEST_CASE("path-shared slots follow ceil(l/B)") {
    const auto s = make(StrategyKind::PathShared, 4);
    // 1-based layers 5 and 8 share a router; 4 and 5 do not.
    CHECK(router_slot(s, 4) == router_slot(s, 7));
    CHECK(router_slot(s, 3) != router_slot(s, 4));
    CHECK(router_slot_count(s, 24) == 6);
    CHECK(router_slot_count(make(StrategyKind::PathShared, 5), 24) == 5);

    Rng rng(6);
    for (std::size_t b : {1, 2, 3, 4, 8}) {
        RouterBank<float> bank(make(StrategyKind::PathShared, b), 8, 8, 16, rng);
        std::size_t count = 0;
        for (auto* p : bank.parameters()) count += p->numel();
        CHECK(count == (8 + b - 1) / b * 8 * 16);
    }
    RouterBank<float> indep(make(StrategyKind::Independent), 8, 8, 16, rng);
    CHECK(indep.parameters().size() == 8);

    // B=1 is exactly Independent.
    Rng a(7), c(7);
    RouterBank<double> b1(make(StrategyKind::PathShared, 1), 3, 4, 5, a);
    RouterBank<double> ind(make(StrategyKind::Independent), 3, 4, 5, c);
    const auto x = random_values(5, 8, 5.0);
    for (std::size_t l = 0; l < 3; ++l) CHECK(b1.route_probs(x, l) == ind.route_probs(x, l));

    CHECK_THROWS_AS(make(StrategyKind::PathShared, 9).validate(8, 16), UsageError);
    CHECK_THROWS_AS(make(StrategyKind::PathShared, 0).validate(8, 16), UsageError);
}

TEST_CASE("random-frozen router parameters are not trainable") {
    Rng rng(9);
    RouterBank<float> bank(make(StrategyKind::RandomFrozen), 4, 4, 8, rng);
    for (auto* p : bank.parameters()) CHECK_FALSE(p->trainable);
}

TEST_CASE("strategy names round-trip") {
    for (auto name : {"indep", "path", "mono", "lowrank", "xmoe", "rand"})
        CHECK(strategy_name(parse_strategy(name)) == name);
    CHECK_THROWS_AS(parse_strategy("dense"), UsageError);
}

TEST_CASE("top_k_select examples") {
    const std::vector<double> p{0.4, 0.3, 0.2, 0.1};
    auto d = top_k_select<double>(p, 2);
    CHECK(d.indices == std::vector<std::uint32_t>{0, 1});
    CHECK(d.gates == std::vector<double>{0.4, 0.3});

    const std::vector<double> u(4, 0.25);
    CHECK(top_k_select<double>(u, 2).indices == std::vector<std::uint32_t>{0, 1});

    d = top_k_select<double>(p, 4);
    CHECK(std::accumulate(d.gates.begin(), d.gates.end(), 0.0) == doctest::Approx(1.0));
    std::set<std::uint32_t> all(d.indices.begin(), d.indices.end());
    CHECK(all.size() == 4);

    CHECK_THROWS_AS(top_k_select<double>(p, 5), UsageError);
    CHECK_THROWS_AS(top_k_select<double>(p, 0), UsageError);

    const std::vector<double> q{0.1, 0.3, 0.3, 0.3};
    CHECK(top_k_select<double>(q, 2).indices == std::vector<std::uint32_t>{1, 2});
}

TEST_CASE("top-k is permutation-equivariant under expert relabeling") {
    Rng rng(10);
    RouterBank<double> bank(make(StrategyKind::Independent), 1, 6, 4, rng);
    const auto perm = Rng(11).permutation(6);
    RouterBank<double> permuted = bank;
    auto& w = bank.slot_weight(0).value;
    auto& pw = permuted.slot_weight(0).value;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j) pw[perm[i] * 4 + j] = w[i * 4 + j];
    const auto x = random_values(4, 12, 30.0);
    const auto p = bank.route_probs(x, 0), pp = permuted.route_probs(x, 0);
    for (std::size_t i = 0; i < 6; ++i) CHECK(pp[perm[i]] == doctest::Approx(p[i]).epsilon(1e-12));
    const auto d = top_k_select<double>(p, 3), dp = top_k_select<double>(pp, 3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(dp.indices[j] == perm[d.indices[j]]);
}

TEST_CASE("restricted top-k constrains only the first pick") {
    const std::vector<double> p{0.5, 0.2, 0.25, 0.05};
    std::vector<std::uint32_t> out(2);
    const std::vector<std::uint8_t> allow{0, 1, 0, 1};
    restricted_top_k<double>(p, allow, 2, out);
    CHECK(out == std::vector<std::uint32_t>{1, 0});
    const std::vector<std::uint8_t> all{1, 1, 1, 1};
    restricted_top_k<double>(p, all, 2, out);
    CHECK(out == top_k_select<double>(p, 2).indices);
    const std::vector<std::uint8_t> none{0, 0, 0, 0};
    CHECK_THROWS_AS(restricted_top_k<double>(p, none, 2, out), UsageError);
}

namespace {

std::vector<Expert<double>> make_experts(std::size_t n, std::size_t d, std::size_t ffn, std::uint64_t seed) {
    std::vector<Expert<double>> experts;
    for (std::size_t e = 0; e < n; ++e) {
        Expert<double> ex{Parameter<double>("in", {ffn, d}), Parameter<double>("out", {d, ffn})};
        ex.w_in.value = random_values(ffn * d, seed + 2 * e, 0.5);
        ex.w_out.value = random_values(d * ffn, seed + 2 * e + 1, 0.5);
        experts.push_back(std::move(ex));
    }
    return experts;
}

std::vector<double> expert_apply(Expert<double>& ex, const std::vector<double>& x, std::size_t d) {
    Tape<double> tape;
    ParamBinder<double> bind(tape);
    auto y = ex.apply(bind, tape.constant({1, d}, x));
    return {y.data().begin(), y.data().end()};
}

}  // namespace

TEST_CASE("combine_experts follows the gated sum") {
    const std::size_t d = 3, ffn = 5, n = 4;
    auto experts = make_experts(n, d, ffn, 20);
    const auto x = random_values(2 * d, 21);
    const std::vector<std::uint32_t> topk{2, 0, 3, 2};
    const std::vector<double> gates{0.5, 0.25, 1.0, 0.125};

    Tape<double> tape;
    ParamBinder<double> bind(tape);
    auto xv = tape.leaf({2, d}, x, true);
    auto g = tape.leaf({4}, gates, true);
    auto y = combine_experts<double>(bind, xv, topk, 2, g, experts);
    for (std::size_t r = 0; r < 2; ++r) {
        std::vector<double> xr(x.begin() + r * d, x.begin() + (r + 1) * d);
        std::vector<double> want(d, 0.0);
        for (std::size_t j = 0; j < 2; ++j) {
            const auto f = expert_apply(experts[topk[r * 2 + j]], xr, d);
            for (std::size_t c = 0; c < d; ++c) want[c] += gates[r * 2 + j] * f[c];
        }
        for (std::size_t c = 0; c < d; ++c) CHECK(y.data()[r * d + c] == doctest::Approx(want[c]).epsilon(1e-12));
    }

    tape.backward(ops::sum(y));
    for (double v : experts[1].w_in.grad) CHECK(v == 0.0);
    for (double v : experts[1].w_out.grad) CHECK(v == 0.0);
    double touched = 0;
    for (double v : experts[2].w_in.grad) touched += std::abs(v);
    CHECK(touched > 0);
}

TEST_CASE("combine_experts with a one-hot gate returns the chosen expert") {
    auto experts = make_experts(3, 4, 6, 30);
    const auto x = random_values(4, 31);
    Tape<double> tape;
    ParamBinder<double> bind(tape);
    const std::vector<std::uint32_t> topk{1};
    auto y = combine_experts<double>(bind, tape.constant({1, 4}, x), topk, 1, tape.constant({1}, {1.0}), experts);
    const auto want = expert_apply(experts[1], x, 4);
    for (std::size_t c = 0; c < 4; ++c) CHECK(y.data()[c] == doctest::Approx(want[c]).epsilon(1e-14));
}

TEST_CASE("combine_experts with identical experts scales by the gate sum") {
    auto experts = make_experts(1, 3, 4, 40);
    experts.push_back(experts[0]);
    experts.push_back(experts[0]);
    const auto x = random_values(3, 41);
    const auto f = expert_apply(experts[0], x, 3);
    Tape<double> tape;
    ParamBinder<double> bind(tape);
    const std::vector<std::uint32_t> topk{2, 0};
    auto y = combine_experts<double>(bind, tape.constant({1, 3}, x), topk, 2, tape.constant({2}, {0.3, 0.45}), experts);
    for (std::size_t c = 0; c < 3; ++c) CHECK(y.data()[c] == doctest::Approx(0.75 * f[c]).epsilon(1e-12));
}

TEST_CASE("combine_experts rejects out-of-range experts") {
    auto experts = make_experts(2, 2, 2, 50);
    Tape<double> tape;
    ParamBinder<double> bind(tape);
    const std::vector<std::uint32_t> topk{5};
    CHECK_THROWS_AS(combine_experts<double>(bind, tape.constant({1, 2}, {1, 1}), topk, 1,
                                            tape.constant({1}, {1.0}), experts),
                    UsageError);
}

namespace {

LayerRouting<double> routing(std::size_t rows, std::size_t n, std::size_t k, bool balanced) {
    LayerRouting<double> r;
    r.rows = rows;
    r.experts = n;
    r.top_k = k;
    for (std::size_t row = 0; row < rows; ++row) {
        for (std::size_t i = 0; i < n; ++i)
            r.probs.push_back(balanced ? 1.0 / static_cast<double>(n) : (i == 0 ? 1.0 : 0.0));
        for (std::size_t j = 0; j < k; ++j)
            r.topk.push_back(static_cast<std::uint32_t>(balanced ? (row * k + j) % n : (j == 0 ? 0 : j)));
        r.gates.assign(r.topk.size(), 0.0);
    }
    return r;
}

}  // namespace

TEST_CASE("load-balancing loss closed forms") {
    const double alpha = 0.01;
    const auto balanced = routing(64, 16, 1, true);
    CHECK(std::abs(load_balance_value(balanced, alpha) - alpha) < 1e-9);
    double total = 0;
    for (int l = 0; l < 24; ++l) total += load_balance_value(balanced, alpha);
    CHECK(std::abs(total - 0.24) < 1e-9);

    const auto collapsed = routing(64, 16, 1, false);
    CHECK(std::abs(load_balance_value(collapsed, alpha) - alpha * 16) < 1e-9);

    const auto balanced_k2 = routing(32, 8, 2, true);
    CHECK(std::abs(load_balance_value(balanced_k2, 1.0) - 1.0) < 1e-12);
    CHECK(max_load_ratio(balanced_k2) == doctest::Approx(1.0));
    CHECK(max_load_ratio(collapsed) == doctest::Approx(16.0));

    LayerRouting<double> empty;
    empty.experts = 4;
    empty.top_k = 1;
    CHECK_THROWS_AS(load_balance_value(empty, alpha), UsageError);
}

TEST_CASE("load-balancing loss on the tape matches the recorded value") {
    const std::size_t rows = 6, n = 4, k = 2;
    Tape<double> tape;
    auto probs = ops::softmax_rows(tape.leaf({rows, n}, random_values(rows * n, 60, 2.0), true));
    LayerRouting<double> r;
    r.rows = rows;
    r.experts = n;
    r.top_k = k;
    r.probs.assign(probs.data().begin(), probs.data().end());
    r.topk.resize(rows * k);
    top_k_rows<double>(r.probs, rows, n, k, r.topk);
    auto loss = load_balance_loss(probs, std::span<const std::uint32_t>(r.topk), k);
    CHECK(loss.item() == doctest::Approx(load_balance_value(r, 1.0)).epsilon(1e-12));
    const auto f = assignment_fractions<double>(r.topk, rows, k, n);
    CHECK(std::accumulate(f.begin(), f.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("mono decision reuse") {
    auto distinct = [](std::size_t b, std::size_t layers) {
        const auto src = decision_sources(make(StrategyKind::MonoShared, b), layers);
        return std::set<std::size_t>(src.begin(), src.end()).size();
    };
    CHECK(distinct(8, 24) == 3);
    CHECK(distinct(1, 24) == 24);
    CHECK(distinct(24, 24) == 1);
    const auto src = decision_sources(make(StrategyKind::MonoShared, 3), 7);
    CHECK(src == std::vector<std::size_t>{0, 0, 0, 3, 3, 3, 6});
    CHECK(decision_sources(make(StrategyKind::PathShared, 3), 4) == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("router gradients pass finite-difference checks for every strategy") {
    const std::size_t d = 5, n = 4, layers = 2;
    for (auto kind : {StrategyKind::Independent, StrategyKind::PathShared, StrategyKind::LowRank,
                      StrategyKind::XMoE}) {
        auto s = make(kind, 2);
        s.rank = 2;
        s.proj_dim = 3;
        s.tau_init = 0.5;
        Rng rng(70);
        RouterBank<double> bank(s, layers, n, d, rng);
        for (auto* p : bank.parameters())
            if (p->value.size() > 1) p->value = random_values(p->numel(), 71 + p->numel(), 0.8);
        const auto x = random_values(3 * d, 72);
        const auto w = random_values(3 * n, 73);
        auto loss = [&](Tape<double>& t) {
            ParamBinder<double> bind(t);
            auto u = t.constant({3, d}, x);
            auto p0 = bank.probs(bind, u, 0);
            auto p1 = bank.probs(bind, u, 1);
            return ops::sum(ops::mul(ops::add(p0, ops::mul(p1, p1)), t.constant({3, n}, w)));
        };
        auto params = bank.parameters();
        CHECK(grad_check_parameters(loss, std::span<Parameter<double>* const>(params), 1e-5) < 1e-4);
    }
}
