// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/model/gradient_suite.hpp"

#include <functional>

#include "pathmoe/model/model.hpp"
#include "pathmoe/tensor/grad_check.hpp"
#include "pathmoe/tensor/ops.hpp"
#include "pathmoe/train/path_trie.hpp"

namespace pathmoe {

namespace {

using V = Var<double>;
constexpr double kEps = 1e-5;

class Suite {
public:
    explicit Suite(std::uint64_t seed) : seed_(seed) {}

    std::vector<double> values(std::size_t n, double scale = 1.0) {
        Rng rng(derive_seed(seed_, ++draws_));
        std::vector<double> v(n);
        for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * scale;
        return v;
    }

    // Checks sum(w * op(x)) for fixed random w, so every output element
    // contributes with a distinct weight.
    void unary(const std::string& name, const std::function<V(Tape<double>&, V)>& op, const Shape& shape) {
        const auto weights = values(shape_numel(shape) * 4);
        const auto x = values(shape_numel(shape));
        auto f = [&](Tape<double>& t, V in) {
            auto y = op(t, in);
            std::vector<double> w(weights.begin(), weights.begin() + static_cast<std::ptrdiff_t>(y.numel()));
            return ops::sum(ops::mul(y, t.constant(y.shape(), w)));
        };
        out.push_back({name, grad_check(f, shape, x, kEps)});
    }

    std::vector<GradCheckEntry> out;

private:
    std::uint64_t seed_;
    std::uint64_t draws_ = 0;
};

ModelConfig small(std::size_t layers, StrategyKind kind = StrategyKind::Independent, std::size_t block = 1) {
    ModelConfig c;
    c.layers = layers;
    c.experts = 4;
    c.top_k = 2;
    c.d_model = 8;
    c.n_heads = 2;
    c.d_ffn = 6;
    c.vocab_size = 11;
    c.seq_len = 5;
    c.strategy.kind = kind;
    c.strategy.block_size = block;
    c.strategy.rank = 2;
    c.strategy.proj_dim = 3;
    c.alpha = 0.1;
    return c;
}

}  // namespace

std::vector<GradCheckEntry> gradient_suite(std::uint64_t seed) {
    Suite s(seed);
    {
        const auto b = s.values(12), a = s.values(6), w = s.values(20);
        s.unary("matmul.lhs", [&](Tape<double>& t, V x) { return ops::matmul(x, t.leaf({4, 3}, b)); }, {2, 4});
        s.unary("matmul.rhs", [&](Tape<double>& t, V x) { return ops::matmul(t.leaf({3, 2}, a), x); }, {2, 4});
        s.unary("linear.input", [&](Tape<double>& t, V x) { return ops::linear(x, t.leaf({3, 4}, b)); }, {2, 4});
        s.unary("linear.weight", [&](Tape<double>& t, V x) { return ops::linear(t.leaf({5, 4}, w), x); }, {3, 4});
    }
    {
        const auto c = s.values(6);
        s.unary("add", [&](Tape<double>& t, V x) { return ops::add(x, t.leaf({6}, c)); }, {6});
        s.unary("mul", [](Tape<double>&, V x) { return ops::mul(x, x); }, {6});
        s.unary("scale", [](Tape<double>&, V x) { return ops::scale(x, -2.5); }, {6});
        s.unary("gelu", [](Tape<double>&, V x) { return ops::gelu(x); }, {3, 5});
        s.unary("softmax_rows", [](Tape<double>&, V x) { return ops::softmax_rows(x); }, {3, 5});
    }
    {
        const auto g = s.values(5), bb = s.values(5), x = s.values(20), r = s.values(3), m = s.values(12),
                   d = s.values(6);
        s.unary("layer_norm.input",
                [&](Tape<double>& t, V in) { return ops::layer_norm(in, t.leaf({5}, g), t.leaf({5}, bb)); }, {4, 5});
        s.unary("layer_norm.gain",
                [&](Tape<double>& t, V in) { return ops::layer_norm(t.leaf({4, 5}, x), in, t.leaf({5}, bb)); }, {5});
        s.unary("layer_norm.bias",
                [&](Tape<double>& t, V in) { return ops::layer_norm(t.leaf({4, 5}, x), t.leaf({5}, g), in); }, {5});
        s.unary("l2_normalize_rows", [](Tape<double>&, V in) { return ops::l2_normalize_rows(in); }, {3, 4});
        s.unary("mul_rows.input", [&](Tape<double>& t, V in) { return ops::mul_rows(in, t.leaf({3}, r)); }, {3, 4});
        s.unary("mul_rows.scale", [&](Tape<double>& t, V in) { return ops::mul_rows(t.leaf({3, 4}, m), in); }, {3});
        s.unary("div_scalar.input", [](Tape<double>& t, V in) { return ops::div_scalar(in, t.leaf({1}, {0.7})); },
                {2, 3});
        s.unary("div_scalar.divisor",
                [&](Tape<double>& t, V in) { return ops::div_scalar(t.leaf({2, 3}, d), ops::add(in, t.leaf({1}, {2.0}))); },
                {1});
    }
    {
        const std::vector<std::int32_t> ids{2, 0, 2, 3};
        const std::vector<std::uint32_t> rows{1, 1, 3}, flat{0, 5, 5, 11};
        s.unary("embedding", [&](Tape<double>&, V x) { return ops::embedding(x, ids); }, {4, 3});
        s.unary("reshape", [](Tape<double>&, V x) { return ops::reshape(x, {2, 6}); }, {3, 4});
        s.unary("gather_rows", [&](Tape<double>&, V x) { return ops::gather_rows(x, rows); }, {4, 3});
        s.unary("scatter_add_rows", [&](Tape<double>&, V x) { return ops::scatter_add_rows(x, rows, 5); }, {3, 3});
        s.unary("gather_elements", [&](Tape<double>&, V x) { return ops::gather_elements(x, flat); }, {3, 4});
    }
    {
        const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1, 0, 0};
        const std::vector<double> f{0.1, 0.4, 0.3, 0.2};
        s.unary("masked_renormalize_rows",
                [&](Tape<double>&, V x) { return ops::masked_renormalize_rows(ops::softmax_rows(x), mask); }, {2, 4});
        s.unary("load_balance",
                [&](Tape<double>&, V x) { return ops::load_balance(ops::softmax_rows(x), std::span<const double>(f)); },
                {5, 4});
    }
    {
        const std::size_t batch = 2, seq = 4, heads = 2, width = 6;
        const Shape sh{batch * seq, width};
        const auto k = s.values(batch * seq * width), v = s.values(batch * seq * width);
        s.unary("attention.query",
                [&](Tape<double>& t, V q) { return ops::causal_attention(q, t.leaf(sh, k), t.leaf(sh, v), batch, seq, heads); },
                sh);
        s.unary("attention.key",
                [&](Tape<double>& t, V kk) { return ops::causal_attention(t.leaf(sh, v), kk, t.leaf(sh, k), batch, seq, heads); },
                sh);
        s.unary("attention.value",
                [&](Tape<double>& t, V vv) { return ops::causal_attention(t.leaf(sh, k), t.leaf(sh, v), vv, batch, seq, heads); },
                sh);
        s.unary("rotary", [&](Tape<double>&, V x) { return ops::rotary(x, batch, seq, heads); }, sh);
    }
    {
        const std::vector<std::int32_t> targets{0, 4, 2};
        auto f = [&](Tape<double>&, V x) { return ops::cross_entropy(x, targets); };
        s.out.push_back({"cross_entropy", grad_check(f, {3, 5}, s.values(15, 3.0), kEps)});
    }

    // Whole-model losses. O(1) weights keep every gradient well above the
    // central-difference round-off floor.
    Rng tok(derive_seed(seed, 77));
    std::vector<std::int32_t> in(8), tg(8);
    for (auto& t : in) t = static_cast<std::int32_t>(tok.below(11));
    for (auto& t : tg) t = static_cast<std::int32_t>(tok.below(11));
    auto model_loss = [&](const std::string& name, ModelConfig c, const ForwardOptions& opts = {}) {
        Model<double> m(c, seed);
        for (auto* p : m.parameters())
            if (p->shape.size() == 2) p->value = s.values(p->numel(), 0.6);
        for (auto* p : m.router().parameters())
            if (p->numel() > 1) p->value = s.values(p->numel(), 1.5);
        auto loss = [&](Tape<double>& t) { return total_loss(m.forward(t, in, 2, 4, opts), tg, c.alpha).total; };
        auto params = m.parameters();
        s.out.push_back({name, grad_check_parameters(loss, std::span<Parameter<double>* const>(params), kEps)});
    };
    model_loss("moe_loss.one_layer", small(1));
    auto rot = small(1);
    rot.positions = Positions::Rotary;
    model_loss("moe_loss.rotary", rot);
    model_loss("moe_loss.path_shared", small(2, StrategyKind::PathShared, 2));
    model_loss("moe_loss.mono_shared", small(2, StrategyKind::MonoShared, 2));
    model_loss("moe_loss.low_rank", small(2, StrategyKind::LowRank));
    auto xm = small(1, StrategyKind::XMoE);
    xm.strategy.tau_init = 0.5;
    model_loss("moe_loss.xmoe", xm);
    auto ren = small(1);
    ren.strategy.renormalize_gates = true;
    model_loss("moe_loss.renormalized", ren);
    PathTrie trie(2, 4);
    for (auto p : {std::vector<std::uint32_t>{1, 2}, {1, 3}, {0, 0}}) trie.insert(p);
    ForwardOptions restricted;
    restricted.restriction = &trie;
    model_loss("moe_loss.restricted", small(2), restricted);
    return s.out;
}

}  // namespace pathmoe
