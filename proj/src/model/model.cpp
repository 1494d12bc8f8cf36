// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/model/model.hpp"

#include <cmath>

#include "pathmoe/tensor/ops.hpp"
#include "pathmoe/train/path_trie.hpp"

namespace pathmoe {

namespace {

constexpr double kInitStd = 0.02;

template <typename T>
Parameter<T> normal_param(std::string name, Shape shape, Rng& rng, double std) {
    Parameter<T> p(std::move(name), std::move(shape));
    for (T& v : p.value) v = static_cast<T>(rng.truncated_normal(std));
    return p;
}

template <typename T>
Parameter<T> const_param(std::string name, Shape shape, T value) {
    Parameter<T> p(std::move(name), std::move(shape));
    std::fill(p.value.begin(), p.value.end(), value);
    return p;
}

// gates[s] = a[idx_a[j]] for s = slots_a[j], likewise for b; b may be empty.
template <typename T>
Var<T> merge_gathers(Var<T> a, const std::vector<std::uint32_t>& idx_a, const std::vector<std::uint32_t>& slots_a,
                     Var<T> b, const std::vector<std::uint32_t>& idx_b, const std::vector<std::uint32_t>& slots_b,
                     std::size_t total) {
    auto part = [&](Var<T> src, const std::vector<std::uint32_t>& idx, const std::vector<std::uint32_t>& slots) {
        auto g = ops::reshape(ops::gather_elements(src, std::span<const std::uint32_t>(idx)), {idx.size(), 1});
        return ops::scatter_add_rows(g, std::span<const std::uint32_t>(slots), total);
    };
    Var<T> out = part(a, idx_a, slots_a);
    if (!idx_b.empty()) out = ops::add(out, part(b, idx_b, slots_b));
    return ops::reshape(out, {total});
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed, bool allow_empty) : config_(config) {
    config_.validate(allow_empty);
    const auto& c = config_;
    Rng rng(derive_seed(seed, 1));
    const double out_std = kInitStd / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(c.layers, 1)));

    tok_emb_ = normal_param<T>("embed.token", {c.vocab_size, c.d_model}, rng, kInitStd);
    if (c.positions == Positions::Learned) {
        pos_emb_ = normal_param<T>("embed.position", {c.seq_len, c.d_model}, rng, kInitStd);
    }
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        Layer layer{
            const_param<T>(pre + "ln1.gamma", {c.d_model}, T(1)),
            const_param<T>(pre + "ln1.beta", {c.d_model}, T(0)),
            normal_param<T>(pre + "attn.q", {c.d_model, c.d_model}, rng, kInitStd),
            normal_param<T>(pre + "attn.k", {c.d_model, c.d_model}, rng, kInitStd),
            normal_param<T>(pre + "attn.v", {c.d_model, c.d_model}, rng, kInitStd),
            normal_param<T>(pre + "attn.o", {c.d_model, c.d_model}, rng, out_std),
            const_param<T>(pre + "ln2.gamma", {c.d_model}, T(1)),
            const_param<T>(pre + "ln2.beta", {c.d_model}, T(0)),
            {},
        };
        for (std::size_t e = 0; e < c.experts; ++e) {
            const std::string ep = pre + "expert" + std::to_string(e) + ".";
            layer.experts.push_back(Expert<T>{normal_param<T>(ep + "in", {c.d_ffn, c.d_model}, rng, kInitStd),
                                              normal_param<T>(ep + "out", {c.d_model, c.d_ffn}, rng, out_std)});
        }
        layers_.push_back(std::move(layer));
    }
    lnf_g_ = const_param<T>("final.ln.gamma", {c.d_model}, T(1));
    lnf_b_ = const_param<T>("final.ln.beta", {c.d_model}, T(0));
    head_ = normal_param<T>("head", {c.vocab_size, c.d_model}, rng, kInitStd);
    if (c.layers > 0) {
        Rng router_rng(derive_seed(seed, 2));
        router_ = RouterBank<T>(c.strategy, c.layers, c.experts, c.d_model, router_rng);
    }
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
    std::vector<Parameter<T>*> out{&tok_emb_};
    if (config_.positions == Positions::Learned) out.push_back(&pos_emb_);
    for (auto& l : layers_) {
        for (auto* p : {&l.ln1_g, &l.ln1_b, &l.wq, &l.wk, &l.wv, &l.wo, &l.ln2_g, &l.ln2_b}) out.push_back(p);
        for (auto& e : l.experts) {
            out.push_back(&e.w_in);
            out.push_back(&e.w_out);
        }
    }
    for (auto* p : router_.parameters()) out.push_back(p);
    out.push_back(&lnf_g_);
    out.push_back(&lnf_b_);
    out.push_back(&head_);
    return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->numel();
    return n;
}

template <typename T>
ForwardResult<T> Model<T>::forward(Tape<T>& tape, std::span<const std::int32_t> tokens, std::size_t batch,
                                   std::size_t seq, const ForwardOptions& opts) {
    const auto& c = config_;
    const std::size_t rows = batch * seq;
    if (tokens.size() != rows) {
        throw ShapeError("forward: " + std::to_string(tokens.size()) + " tokens for batch " +
                         std::to_string(batch) + " x seq " + std::to_string(seq));
    }
    if (seq < 1 || seq > c.seq_len) {
        throw ShapeError("forward: seq " + std::to_string(seq) + " outside [1, " + std::to_string(c.seq_len) + "]");
    }
    if (opts.restriction) {
        if (c.strategy.kind == StrategyKind::MonoShared) {
            throw UsageError("path restriction needs per-layer decisions; not available with mono");
        }
        if (opts.restriction->layers() != c.layers || opts.restriction->experts() != c.experts) {
            throw UsageError("path restriction: trie shape does not match the model");
        }
    }
    if (opts.expert_maps && !opts.expert_maps->empty() && opts.expert_maps->size() != c.layers) {
        throw UsageError("expert maps: need one entry per layer");
    }

    ParamBinder<T> bind(tape);
    ForwardResult<T> result;
    Var<T> x = ops::embedding(bind(tok_emb_), tokens);
    if (c.positions == Positions::Learned) {
        std::vector<std::int32_t> pos(rows);
        for (std::size_t r = 0; r < rows; ++r) pos[r] = static_cast<std::int32_t>(r % seq);
        x = ops::add(x, ops::embedding(bind(pos_emb_), std::span<const std::int32_t>(pos)));
    }

    const std::size_t n = c.experts, k = c.top_k;
    struct Cached {
        Var<T> probs, gates;
        std::vector<std::uint32_t> topk;
    };
    std::vector<Cached> cache(c.layers);
    std::vector<std::int32_t> node(opts.restriction ? rows : 0, 0);
    std::vector<std::uint8_t> mask(n);

    for (std::size_t l = 0; l < c.layers; ++l) {
        Layer& layer = layers_[l];
        Var<T> h = x;
        if (!opts.zero_attention) {
            auto a = ops::layer_norm(x, bind(layer.ln1_g), bind(layer.ln1_b));
            auto q = ops::linear(a, bind(layer.wq));
            auto kk = ops::linear(a, bind(layer.wk));
            auto v = ops::linear(a, bind(layer.wv));
            if (c.positions == Positions::Rotary) {
                q = ops::rotary(q, batch, seq, c.n_heads);
                kk = ops::rotary(kk, batch, seq, c.n_heads);
            }
            auto att = ops::causal_attention(q, kk, v, batch, seq, c.n_heads);
            h = ops::add(x, ops::linear(att, bind(layer.wo)));
        }
        auto u = ops::layer_norm(h, bind(layer.ln2_g), bind(layer.ln2_b));

        const std::size_t src = decision_source(c.strategy, l);
        if (src == l) {
            Cached& cur = cache[l];
            cur.probs = router_.probs(bind, u, l);
            const auto pv = cur.probs.data();
            cur.topk.resize(rows * k);
            std::vector<std::uint32_t> free_idx, free_slots, masked_idx, masked_slots;
            std::vector<std::uint8_t> row_mask;
            if (opts.restriction) {
                row_mask.assign(rows * n, 1);
                for (std::size_t r = 0; r < rows; ++r) {
                    opts.restriction->allowed(static_cast<std::size_t>(node[r]), mask);
                    std::copy(mask.begin(), mask.end(), row_mask.begin() + static_cast<std::ptrdiff_t>(r * n));
                    restricted_top_k<T>(pv.subspan(r * n, n), mask, k,
                                        std::span<std::uint32_t>(cur.topk).subspan(r * k, k));
                    const bool constrained = std::find(mask.begin(), mask.end(), 0) != mask.end();
                    for (std::size_t j = 0; j < k; ++j) {
                        const auto slot = static_cast<std::uint32_t>(r * k + j);
                        const auto flat = static_cast<std::uint32_t>(r * n + cur.topk[slot]);
                        if (j == 0 && constrained) {
                            masked_idx.push_back(flat);
                            masked_slots.push_back(slot);
                        } else {
                            free_idx.push_back(flat);
                            free_slots.push_back(slot);
                        }
                    }
                    node[r] = opts.restriction->child(static_cast<std::size_t>(node[r]), cur.topk[r * k]);
                }
            } else {
                top_k_rows<T>(pv, rows, n, k, cur.topk);
            }

            std::vector<std::uint32_t> flat(rows * k);
            for (std::size_t s = 0; s < flat.size(); ++s)
                flat[s] = static_cast<std::uint32_t>((s / k) * n + cur.topk[s]);
            if (c.strategy.renormalize_gates) {
                std::vector<std::uint8_t> sel(rows * n, 0);
                for (auto f : flat) sel[f] = 1;
                cur.gates = ops::gather_elements(ops::masked_renormalize_rows(cur.probs, std::span<const std::uint8_t>(sel)),
                                                 std::span<const std::uint32_t>(flat));
            } else if (!masked_idx.empty()) {
                auto renorm = ops::masked_renormalize_rows(cur.probs, std::span<const std::uint8_t>(row_mask));
                if (free_idx.empty()) {
                    cur.gates = merge_gathers(renorm, masked_idx, masked_slots, renorm, {}, {}, rows * k);
                } else {
                    cur.gates = merge_gathers(cur.probs, free_idx, free_slots, renorm, masked_idx, masked_slots, rows * k);
                }
            } else {
                cur.gates = ops::gather_elements(cur.probs, std::span<const std::uint32_t>(flat));
            }
        }
        const Cached& dec = cache[src];

        LayerRouting<T> lr;
        lr.rows = rows;
        lr.experts = n;
        lr.top_k = k;
        lr.probs.assign(dec.probs.data().begin(), dec.probs.data().end());
        lr.topk = dec.topk;
        lr.gates.assign(dec.gates.data().begin(), dec.gates.data().end());

        if (opts.need_aux) {
            auto term = load_balance_loss(dec.probs, std::span<const std::uint32_t>(dec.topk), k);
            result.aux = result.aux.valid() ? ops::add(result.aux, term) : term;
        }

        if (opts.zero_experts) {
            x = h;
        } else {
            std::span<const std::uint32_t> map;
            if (opts.expert_maps && !opts.expert_maps->empty()) map = (*opts.expert_maps)[l];
            x = ops::add(h, combine_experts<T>(bind, u, std::span<const std::uint32_t>(dec.topk), k, dec.gates,
                                               layer.experts, map));
        }
        result.routing.push_back(std::move(lr));
    }

    auto xf = ops::layer_norm(x, bind(lnf_g_), bind(lnf_b_));
    result.logits = ops::linear(xf, bind(head_));
    return result;
}

template <typename T>
std::vector<NamedArray> Model<T>::export_arrays() {
    std::vector<NamedArray> out;
    for (auto* p : parameters()) {
        out.push_back({p->name, p->shape, std::vector<float>(p->value.begin(), p->value.end())});
    }
    return out;
}

template <typename T>
void Model<T>::import_arrays(const Checkpoint& ckpt) {
    for (auto* p : parameters()) {
        const NamedArray* a = ckpt.find(p->name);
        if (!a) throw DataError("checkpoint: missing array '" + p->name + "'");
        if (a->shape != p->shape) {
            throw DataError("checkpoint: array '" + p->name + "' has shape " + shape_str(a->shape) +
                            ", model expects " + shape_str(p->shape));
        }
        std::copy(a->data.begin(), a->data.end(), p->value.begin());
    }
}

template <typename T>
LossParts<T> total_loss(const ForwardResult<T>& fwd, std::span<const std::int32_t> targets, double alpha) {
    LossParts<T> parts;
    auto ce = ops::cross_entropy(fwd.logits, targets);
    parts.ce = static_cast<double>(ce.item());
    parts.total = ce;
    if (alpha > 0 && !fwd.routing.empty()) {
        if (!fwd.aux.valid()) throw UsageError("total_loss: load-balancing term was not built");
        parts.total = ops::add(ce, ops::scale(fwd.aux, static_cast<T>(alpha)));
        parts.aux = alpha * static_cast<double>(fwd.aux.item());
    }
    return parts;
}

template <typename T>
double perplexity(Model<T>& model, std::span<const std::int32_t> stream, std::size_t batch,
                  const ForwardOptions& opts) {
    if (stream.size() < 2) throw DataError("perplexity: evaluation stream needs at least two tokens");
    if (batch < 1) throw UsageError("perplexity: batch must be positive");
    const std::size_t seq = model.config().seq_len;
    ForwardOptions o = opts;
    o.need_aux = false;

    double nll = 0;
    std::size_t count = 0;
    auto run = [&](std::size_t first, std::size_t windows, std::size_t len) {
        std::vector<std::int32_t> in(windows * len), tg(windows * len);
        for (std::size_t w = 0; w < windows; ++w) {
            const std::size_t start = first + w * len;
            for (std::size_t t = 0; t < len; ++t) {
                in[w * len + t] = stream[start + t];
                tg[w * len + t] = stream[start + t + 1];
            }
        }
        Tape<T> tape;
        tape.set_grad_enabled(false);
        auto fwd = model.forward(tape, in, windows, len, o);
        auto ce = ops::cross_entropy(fwd.logits, std::span<const std::int32_t>(tg));
        nll += static_cast<double>(ce.item()) * static_cast<double>(windows * len);
        count += windows * len;
    };
    const std::size_t full = (stream.size() - 1) / seq;
    for (std::size_t w = 0; w < full; w += batch) run(w * seq, std::min(batch, full - w), seq);
    const std::size_t rest = (stream.size() - 1) - full * seq;
    if (rest > 0) run(full * seq, 1, rest);
    return std::exp(nll / static_cast<double>(count));
}

template class Model<float>;
template class Model<double>;
template LossParts<float> total_loss<float>(const ForwardResult<float>&, std::span<const std::int32_t>, double);
template LossParts<double> total_loss<double>(const ForwardResult<double>&, std::span<const std::int32_t>, double);
template double perplexity<float>(Model<float>&, std::span<const std::int32_t>, std::size_t, const ForwardOptions&);
template double perplexity<double>(Model<double>&, std::span<const std::int32_t>, std::size_t, const ForwardOptions&);

}  // namespace pathmoe
