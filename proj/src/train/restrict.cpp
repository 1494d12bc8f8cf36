// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/train/restrict.hpp"

#include <algorithm>

#include "pathmoe/analysis/trace.hpp"

namespace pathmoe {

TopPaths top_paths_from_histogram(const PathHistogram& hist, std::size_t layers, std::size_t experts, std::size_t k) {
    if (k < 1) throw UsageError("restrict: K must be at least 1");
    TopPaths out;
    out.trie = PathTrie(layers, experts);
    auto ranked = hist.ranked();
    out.observed = ranked.size();
    out.short_of_k = ranked.size() < k;
    if (ranked.size() > k) ranked.resize(k);
    for (const auto& [path, count] : ranked) out.trie.insert(path);
    out.selected = std::move(ranked);
    return out;
}

TopPaths identify_top_paths(Model<float>& model, std::span<const std::int32_t> stream, std::size_t k,
                            std::size_t batch) {
    const Trace trace = record_trace(model, stream, batch);
    const auto& mc = model.config();
    return top_paths_from_histogram(path_histogram(trace), mc.layers, mc.experts, k);
}

RestrictOutcome restrict_and_train(const std::string& checkpoint, const Corpus& corpus, std::size_t k,
                                   const std::string& out_dir, bool quiet) {
    auto loaded = load_model(checkpoint);
    if (loaded.run.model.strategy.kind == StrategyKind::MonoShared) {
        throw UsageError("restrict: path restriction is not defined for decision-shared routing");
    }
    const std::size_t n = std::min(loaded.run.train.eval_tokens, corpus.train.size());
    if (n == 0) throw DataError("restrict: empty training split");
    RestrictOutcome out;
    out.paths = identify_top_paths(*loaded.model, std::span<const std::int32_t>(corpus.train.data(), n), k,
                                   loaded.run.train.eval_batch);
    RunConfig run = loaded.run;
    run.out_dir = out_dir;
    TrainHooks hooks;
    hooks.restriction = &out.paths.trie;
    hooks.resume_from = checkpoint;
    hooks.quiet = quiet;
    out.run = train(run, corpus, hooks);
    return out;
}

}  // namespace pathmoe
