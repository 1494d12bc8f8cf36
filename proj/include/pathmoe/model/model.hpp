// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm decoder whose every feed-forward sublayer is a mixture of experts:
//   h  = x + Attn(LN1 x)
//   u  = LN2 h
//   x' = h + sum_{i in TopK(p(u))} p_i F_i(u)
// followed by a final LayerNorm and an untied output projection.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pathmoe/model/checkpoint.hpp"
#include "pathmoe/model/config.hpp"
#include "pathmoe/router/router.hpp"
#include "pathmoe/tensor/binder.hpp"

namespace pathmoe {

class PathTrie;

struct ForwardOptions {
    /// Constrains each token's top-1 expert to continue a stored path.
    const PathTrie* restriction = nullptr;
    /// Per layer: selected expert e is served by expert_maps[l][e]. Empty
    /// outer vector or empty inner vector means identity.
    const std::vector<std::vector<std::uint32_t>>* expert_maps = nullptr;
    /// Build the load-balancing term on the tape.
    bool need_aux = true;
    // Debug switches for residual-stream tests.
    bool zero_attention = false;
    bool zero_experts = false;
};

template <typename T>
struct ForwardResult {
    Var<T> logits;                          // [batch*seq, vocab]
    std::vector<LayerRouting<T>> routing;   // one per layer
    /// sum over layers of N * sum_i f_i P_i (no alpha); invalid if not built.
    Var<T> aux;
};

template <typename T>
struct LossParts {
    Var<T> total;
    double ce = 0;
    double aux = 0;  // alpha-weighted
};

template <typename T>
class Model {
public:
    /// Body and router weights draw from separate streams of `seed`, so two
    /// strategies built from one seed share every non-router initial weight.
    Model(const ModelConfig& config, std::uint64_t seed, bool allow_empty = false);

    const ModelConfig& config() const { return config_; }
    std::vector<Parameter<T>*> parameters();
    std::size_t parameter_count();
    RouterBank<T>& router() { return router_; }
    std::vector<Expert<T>>& experts(std::size_t layer) { return layers_.at(layer).experts; }

    /// tokens is [batch, seq] row-major, seq <= config().seq_len.
    ForwardResult<T> forward(Tape<T>& tape, std::span<const std::int32_t> tokens, std::size_t batch,
                             std::size_t seq, const ForwardOptions& opts = {});

    /// Parameter values as named arrays (float32).
    std::vector<NamedArray> export_arrays();
    /// Throws DataError when an array is missing or has the wrong shape.
    void import_arrays(const Checkpoint& ckpt);

private:
    struct Layer {
        Parameter<T> ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b;
        std::vector<Expert<T>> experts;
    };

    ModelConfig config_;
    Parameter<T> tok_emb_, pos_emb_, lnf_g_, lnf_b_, head_;
    std::vector<Layer> layers_;
    RouterBank<T> router_;
};

/// Cross-entropy plus alpha times the load-balancing term. With alpha == 0
/// the total is exactly the cross-entropy node.
template <typename T>
LossParts<T> total_loss(const ForwardResult<T>& fwd, std::span<const std::int32_t> targets, double alpha);

/// exp(mean cross-entropy) over a token stream, scored in consecutive windows
/// of seq_len + 1 tokens (each token after the first of a window is a target
/// once). Throws DataError when the stream has fewer than two tokens.
template <typename T>
double perplexity(Model<T>& model, std::span<const std::int32_t> stream, std::size_t batch,
                  const ForwardOptions& opts = {});

}  // namespace pathmoe
