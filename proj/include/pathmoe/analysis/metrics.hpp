// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Path statistics over a routing trace. Entropies are plug-in estimates in
// bits. Layer arguments are 1-based where they appear in the interface.

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "pathmoe/analysis/trace.hpp"

namespace pathmoe {

using Path = std::vector<std::uint32_t>;

struct PathHistogram {
    std::map<Path, std::size_t> counts;
    std::size_t total = 0;

    /// (path, count) by descending count, ties by path order.
    std::vector<std::pair<Path, std::size_t>> ranked() const;
};

PathHistogram path_histogram(const Trace& trace);

struct EntropyReport {
    double bits = 0;
    double effective_paths = 1;  // 2^bits
    std::size_t unique_paths = 0;
};

/// Throws UsageError on an empty histogram.
EntropyReport routing_entropy(const PathHistogram& hist);

/// Sum of the K largest path frequencies.
double cumulative_coverage(const PathHistogram& hist, std::size_t k);

/// H(E_1) + sum_{l>=2} H(E_l | E_{l-1}) from the empirical pairwise joints.
double markov_entropy(const Trace& trace);

/// I(E_l; E_{l-1}) in bits, 2 <= layer <= L.
double adjacent_mi(const Trace& trace, std::size_t layer);

/// labels[l][e]: aligned label of layer-l expert e. Layer 1 is the identity;
/// each later layer is matched to the previous one by optimal assignment on
/// top-1 co-occurrence counts and composed down the stack.
struct Alignment {
    std::vector<std::vector<std::uint32_t>> labels;

    std::uint32_t operator()(std::size_t layer, std::uint32_t expert) const { return labels[layer][expert]; }
};

Alignment identity_alignment(std::size_t layers, std::size_t experts);
Alignment align_experts(const Trace& trace);

/// Maximum-weight perfect matching on a square matrix: result[col] = row
/// assigned to that column. Ties resolve deterministically.
std::vector<std::uint32_t> max_assignment(const std::vector<std::vector<double>>& weight);

/// Fraction of (token, layer >= 2) pairs whose aligned top-1 equals the
/// previous layer's aligned top-1.
double adjacent_agreement(const Trace& trace, const Alignment& align);

/// Mean Jaccard similarity of aligned top-k sets over every consecutive layer
/// pair inside every window of w layers, averaged over tokens and windows.
double path_consistency(const Trace& trace, const Alignment& align, std::size_t window);

/// Share of maximal runs (per token, per aligned expert, of consecutive layers
/// whose top-k set holds the expert) that last at least `min_run` layers.
double sustained_engagement(const Trace& trace, const Alignment& align, std::size_t min_run);

/// Entry l-1: mean over token occurrences of the entropy of the aligned top-1
/// usage over layers 1..l.
std::vector<double> token_entropy_profile(const Trace& trace, const Alignment& align);

struct PerturbResult {
    double base_ppl = 0, perturbed_ppl = 0, delta_percent = 0;
    std::vector<std::vector<std::uint32_t>> maps;  // empty inner vector: layer untouched
};

/// Each layer independently, with probability p, serves selection e by
/// expert perm[e] for a uniform random permutation drawn from `seed`.
PerturbResult perturb_and_eval(Model<float>& model, double p, std::span<const std::int32_t> stream,
                               std::uint64_t seed, std::size_t batch);

}  // namespace pathmoe
