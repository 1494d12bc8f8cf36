// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "pathmoe/model/model.hpp"
#include "pathmoe/tensor/grad_check.hpp"
#include "pathmoe/tensor/ops.hpp"
#include "pathmoe/train/path_trie.hpp"
#include "support/random.hpp"

using namespace pathmoe;
using pathmoe::testing::random_values;

namespace {

ModelConfig tiny(std::size_t layers = 2, StrategyKind kind = StrategyKind::Independent, std::size_t block = 1) {
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

std::vector<std::int32_t> tokens(std::size_t n, std::uint64_t seed, std::size_t vocab) {
    Rng rng(seed);
    std::vector<std::int32_t> out(n);
    for (auto& t : out) t = static_cast<std::int32_t>(rng.below(vocab));
    return out;
}

template <typename T>
std::vector<T> logits_of(Model<T>& m, const std::vector<std::int32_t>& in, std::size_t batch, std::size_t seq,
                         const ForwardOptions& opts = {}) {
    Tape<T> tape;
    auto f = m.forward(tape, in, batch, seq, opts);
    return {f.logits.data().begin(), f.logits.data().end()};
}

Parameter<double>* find(Model<double>& m, const std::string& name) {
    for (auto* p : m.parameters())
        if (p->name == name) return p;
    return nullptr;
}

// LN(x) with unit gain, zero bias, eps 1e-5, then x * head^T.
std::vector<double> head_of_embedding(Model<double>& m, const std::vector<std::int32_t>& in, std::size_t seq) {
    const auto& c = m.config();
    const auto& emb = find(m, "embed.token")->value;
    const auto& pos = find(m, "embed.position")->value;
    const auto& head = find(m, "head")->value;
    std::vector<double> out;
    for (std::size_t r = 0; r < in.size(); ++r) {
        std::vector<double> x(c.d_model);
        for (std::size_t j = 0; j < c.d_model; ++j)
            x[j] = emb[static_cast<std::size_t>(in[r]) * c.d_model + j] + pos[(r % seq) * c.d_model + j];
        double mean = 0, var = 0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(c.d_model);
        for (double v : x) var += (v - mean) * (v - mean);
        var /= static_cast<double>(c.d_model);
        for (double& v : x) v = (v - mean) / std::sqrt(var + 1e-5);
        for (std::size_t o = 0; o < c.vocab_size; ++o) {
            double s = 0;
            for (std::size_t j = 0; j < c.d_model; ++j) s += head[o * c.d_model + j] * x[j];
            out.push_back(s);
        }
    }
    return out;
}

// O(1) weights keep every gradient well above the central-difference
// round-off floor (the 0.02 training init leaves some near 1e-9).
void scale_up(Model<double>& m, std::uint64_t seed) {
    for (auto* p : m.parameters())
        if (p->shape.size() == 2) p->value = random_values(p->numel(), seed + p->numel(), 0.6);
}

void sharpen_routers(Model<double>& m, std::uint64_t seed) {
    for (auto* p : m.router().parameters())
        if (p->numel() > 1) p->value = random_values(p->numel(), seed + p->numel(), 1.5);
}

}  // namespace

TEST_CASE("config validation names the field") {
    auto c = tiny();
    c.top_k = 5;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("top_k"), UsageError);
    c = tiny();
    c.n_heads = 3;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("n_heads"), UsageError);
    c = tiny();
    c.layers = 0;
    CHECK_THROWS_AS(c.validate(), UsageError);
    CHECK_NOTHROW(c.validate(true));
}

TEST_CASE("config JSON round-trips and rejects unknown fields") {
    auto c = tiny(4, StrategyKind::PathShared, 2);
    c.positions = Positions::Rotary;
    c.strategy.compose_xmoe = true;
    const auto back = model_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK_THROWS_WITH_AS(model_config_from_json({{"layerz", 3}}), doctest::Contains("layerz"), UsageError);
    CHECK_THROWS_AS(model_config_from_json({{"strategy", {{"kind", "dense"}}}}), UsageError);
}

TEST_CASE("zero-layer model is the output projection of the embedding") {
    Model<double> m(tiny(0), 3, true);
    const auto in = tokens(2 * 5, 4, 11);
    const auto got = logits_of(m, in, 2, 5);
    const auto want = head_of_embedding(m, in, 5);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("zeroing attention and experts leaves the pure residual stream") {
    Model<double> m(tiny(3), 5);
    const auto in = tokens(2 * 4, 6, 11);
    ForwardOptions opts;
    opts.zero_attention = true;
    opts.zero_experts = true;
    const auto got = logits_of(m, in, 2, 4, opts);
    const auto want = head_of_embedding(m, in, 4);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("forward is deterministic and traces every (token, layer)") {
    auto c = tiny(3);
    Model<float> a(c, 7), b(c, 7);
    const auto in = tokens(3 * 5, 8, 11);
    Tape<float> t1, t2;
    auto f1 = a.forward(t1, in, 3, 5);
    auto f2 = b.forward(t2, in, 3, 5);
    CHECK(std::vector<float>(f1.logits.data().begin(), f1.logits.data().end()) ==
          std::vector<float>(f2.logits.data().begin(), f2.logits.data().end()));
    REQUIRE(f1.routing.size() == 3);
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(f1.routing[l].topk.size() == 15 * c.top_k);
        CHECK(f1.routing[l].topk == f2.routing[l].topk);
        CHECK(f1.routing[l].gates == f2.routing[l].gates);
        CHECK(f1.routing[l].probs == f2.routing[l].probs);
    }
}

TEST_CASE("forward rejects bad input") {
    Model<float> m(tiny(), 1);
    Tape<float> tape;
    std::vector<std::int32_t> in(10, 0);
    in[3] = 11;
    CHECK_THROWS_AS(m.forward(tape, in, 2, 5), UsageError);
    std::vector<std::int32_t> ok(12, 0);
    CHECK_THROWS_AS(m.forward(tape, ok, 2, 6), ShapeError);
    CHECK_THROWS_AS(m.forward(tape, ok, 2, 5), ShapeError);
}

TEST_CASE("total loss: alpha=0 is pure cross-entropy") {
    Model<double> m(tiny(), 9);
    const auto in = tokens(10, 10, 11), tg = tokens(10, 11, 11);
    Tape<double> tape;
    auto f = m.forward(tape, in, 2, 5);
    auto parts = total_loss(f, tg, 0.0);
    auto ce = ops::cross_entropy(f.logits, std::span<const std::int32_t>(tg));
    CHECK(parts.total.item() == ce.item());
    CHECK(parts.aux == 0.0);
}

TEST_CASE("total loss: uniform routing over 24 layers with N=16 gives aux 0.24") {
    auto c = tiny(24);
    c.experts = 16;
    Model<double> m(c, 12);
    for (auto* p : m.router().parameters()) std::fill(p->value.begin(), p->value.end(), 0.0);
    const auto in = tokens(10, 13, 11), tg = tokens(10, 14, 11);
    Tape<double> tape;
    auto parts = total_loss(m.forward(tape, in, 2, 5), tg, 0.01);
    CHECK(std::abs(parts.aux - 0.24) < 1e-9);
    CHECK(parts.total.item() == doctest::Approx(parts.ce + 0.24).epsilon(1e-12));
}

TEST_CASE("freshly initialised model predicts near-uniformly") {
    auto c = tiny(2);
    c.vocab_size = 256;
    Model<float> m(c, 15);
    const auto in = tokens(40, 16, 256), tg = tokens(40, 17, 256);
    Tape<float> tape;
    auto parts = total_loss(m.forward(tape, in, 8, 5), tg, 0.0);
    CHECK(std::abs(parts.ce - std::log(256.0)) < 0.05);
}

TEST_CASE("perplexity of a uniform model is the vocabulary size") {
    Model<double> m(tiny(2), 18);
    auto* head = find(m, "head");
    std::fill(head->value.begin(), head->value.end(), 0.0);
    const auto stream = tokens(37, 19, 11);
    CHECK(perplexity(m, stream, 3) == doctest::Approx(11.0).epsilon(1e-12));
    CHECK_THROWS_AS(perplexity(m, std::span<const std::int32_t>(stream.data(), 1), 3), DataError);
}

TEST_CASE("perplexity of a model that has memorised one repeated token approaches 1") {
    Model<double> m(tiny(2), 20);
    find(m, "final.ln.gamma")->value.assign(8, 0.0);
    auto& beta = find(m, "final.ln.beta")->value;
    beta.assign(8, 0.0);
    beta[0] = 1.0;
    auto& head = find(m, "head")->value;
    std::fill(head.begin(), head.end(), 0.0);
    head[4 * 8 + 0] = 60.0;
    const std::vector<std::int32_t> stream(23, 4);
    CHECK(perplexity(m, stream, 2) < 1.0 + 1e-12);
}

TEST_CASE("grad_check through a full MoE layer and the total loss") {
    const auto in = tokens(2 * 4, 21, 11), tg = tokens(2 * 4, 22, 11);
    auto check = [&](ModelConfig c, const ForwardOptions& opts = {}) {
        Model<double> m(c, 23);
        scale_up(m, 25);
        sharpen_routers(m, 24);
        auto loss = [&](Tape<double>& t) { return total_loss(m.forward(t, in, 2, 4, opts), tg, c.alpha).total; };
        auto params = m.parameters();
        return grad_check_parameters(loss, std::span<Parameter<double>* const>(params), 1e-5);
    };
    SUBCASE("one layer, four experts, top-2") { CHECK(check(tiny(1)) < 1e-4); }
    SUBCASE("rotary positions") {
        auto c = tiny(1);
        c.positions = Positions::Rotary;
        CHECK(check(c) < 1e-4);
    }
    SUBCASE("path-shared") { CHECK(check(tiny(2, StrategyKind::PathShared, 2)) < 1e-4); }
    SUBCASE("mono-shared") { CHECK(check(tiny(2, StrategyKind::MonoShared, 2)) < 1e-4); }
    SUBCASE("low-rank") { CHECK(check(tiny(2, StrategyKind::LowRank)) < 1e-4); }
    SUBCASE("x-moe") {
        auto c = tiny(1, StrategyKind::XMoE);
        c.strategy.tau_init = 0.5;
        CHECK(check(c) < 1e-4);
    }
    SUBCASE("renormalised gates") {
        auto c = tiny(1);
        c.strategy.renormalize_gates = true;
        CHECK(check(c) < 1e-4);
    }
    SUBCASE("restricted routing") {
        PathTrie trie(2, 4);
        for (auto p : {std::vector<std::uint32_t>{1, 2}, {1, 3}, {0, 0}}) trie.insert(p);
        ForwardOptions opts;
        opts.restriction = &trie;
        CHECK(check(tiny(2), opts) < 1e-4);
    }
}

TEST_CASE("mono reuses the block head's decision") {
    Model<float> m(tiny(4, StrategyKind::MonoShared, 2), 25);
    const auto in = tokens(10, 26, 11);
    Tape<float> tape;
    auto f = m.forward(tape, in, 2, 5);
    CHECK(f.routing[1].topk == f.routing[0].topk);
    CHECK(f.routing[1].gates == f.routing[0].gates);
    CHECK(f.routing[3].topk == f.routing[2].topk);
    CHECK(m.router().weight_slots() == 2);
}

TEST_CASE("fully shared router on a frozen residual stream picks the same expert at every layer") {
    Model<float> m(tiny(4, StrategyKind::PathShared, 4), 27);
    ForwardOptions opts;
    opts.zero_attention = true;
    opts.zero_experts = true;
    Tape<float> tape;
    auto f = m.forward(tape, tokens(10, 28, 11), 2, 5, opts);
    for (std::size_t l = 1; l < 4; ++l) CHECK(f.routing[l].topk == f.routing[0].topk);
}

TEST_CASE("path restriction follows the trie") {
    auto c = tiny(2);
    Model<double> m(c, 29);
    sharpen_routers(m, 30);
    PathTrie trie(2, 4);
    trie.insert(std::vector<std::uint32_t>{1, 2});
    trie.insert(std::vector<std::uint32_t>{1, 3});
    ForwardOptions opts;
    opts.restriction = &trie;
    Tape<double> tape;
    auto f = m.forward(tape, tokens(10, 31, 11), 2, 5, opts);
    for (std::size_t r = 0; r < 10; ++r) {
        CHECK(f.routing[0].top1(r) == 1);
        const auto e2 = f.routing[1].top1(r);
        CHECK((e2 == 2 || e2 == 3));
        const std::vector<std::uint32_t> path{f.routing[0].top1(r), e2};
        CHECK(trie.contains(path));
        // the top-1 gate is the masked, renormalised probability
        const auto& pr = f.routing[0].probs;
        CHECK(f.routing[0].gates[r * 2] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(f.routing[0].gates[r * 2 + 1] == pr[r * 4 + f.routing[0].topk[r * 2 + 1]]);
    }
}

TEST_CASE("restriction to every path equals unrestricted routing") {
    auto c = tiny(3);
    c.experts = 2;
    Model<float> m(c, 32);
    PathTrie trie(3, 2);
    for (std::uint32_t p = 0; p < 8; ++p) trie.insert(std::vector<std::uint32_t>{p & 1, (p >> 1) & 1, (p >> 2) & 1});
    CHECK(trie.path_count() == 8);
    ForwardOptions opts;
    opts.restriction = &trie;
    const auto in = tokens(10, 33, 11);
    CHECK(logits_of(m, in, 2, 5, opts) == logits_of(m, in, 2, 5));
}

TEST_CASE("restriction is rejected for mono routing") {
    Model<float> m(tiny(2, StrategyKind::MonoShared, 2), 34);
    PathTrie trie(2, 4);
    trie.insert(std::vector<std::uint32_t>{0, 0});
    ForwardOptions opts;
    opts.restriction = &trie;
    Tape<float> tape;
    CHECK_THROWS_AS(m.forward(tape, tokens(10, 35, 11), 2, 5, opts), UsageError);
}

TEST_CASE("expert maps redirect assignments") {
    Model<float> m(tiny(2), 36);
    const auto in = tokens(10, 37, 11);
    std::vector<std::vector<std::uint32_t>> identity{{0, 1, 2, 3}, {}};
    ForwardOptions opts;
    opts.expert_maps = &identity;
    CHECK(logits_of(m, in, 2, 5, opts) == logits_of(m, in, 2, 5));
    std::vector<std::vector<std::uint32_t>> swapped{{3, 2, 1, 0}, {}};
    opts.expert_maps = &swapped;
    CHECK(logits_of(m, in, 2, 5, opts) != logits_of(m, in, 2, 5));
}

TEST_CASE("strategies share non-router initial weights for a seed") {
    Model<float> a(tiny(2), 38), b(tiny(2, StrategyKind::PathShared, 2), 38);
    auto pa = a.parameters(), pb = b.parameters();
    CHECK(pa[0]->value == pb[0]->value);
    CHECK(pa.back()->value == pb.back()->value);
}

TEST_CASE("checkpoint round-trip reproduces logits") {
    const auto dir = std::filesystem::temp_directory_path() / "pathmoe_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "model.pmlb").string();
    auto c = tiny(2, StrategyKind::XMoE);
    Model<float> m(c, 39);
    Checkpoint ckpt;
    ckpt.config_text = to_json(c).dump();
    ckpt.arrays = m.export_arrays();
    write_checkpoint(path, ckpt);

    const auto back = read_checkpoint(path);
    CHECK(back.config_text == ckpt.config_text);
    Model<float> fresh(model_config_from_json(nlohmann::json::parse(back.config_text)), 40);
    const auto in = tokens(10, 41, 11);
    CHECK(logits_of(fresh, in, 2, 5) != logits_of(m, in, 2, 5));
    fresh.import_arrays(back);
    CHECK(logits_of(fresh, in, 2, 5) == logits_of(m, in, 2, 5));

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const std::uint32_t v = 99;
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    CHECK_THROWS_WITH_AS(read_checkpoint(path), doctest::Contains("version"), DataError);
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "NOPE";
    }
    CHECK_THROWS_AS(read_checkpoint(path), DataError);
    CHECK_THROWS_AS(read_checkpoint((dir / "missing.pmlb").string()), DataError);

    Model<float> other(tiny(3), 1);
    CHECK_THROWS_AS(other.import_arrays(back), DataError);
    std::filesystem::remove_all(dir);
}
