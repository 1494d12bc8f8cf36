// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pathmoe/analysis/metrics.hpp"
#include "pathmoe/train/path_trie.hpp"
#include "pathmoe/train/trainer.hpp"

namespace pathmoe {

struct TopPaths {
    PathTrie trie;
    std::vector<std::pair<Path, std::size_t>> selected;  // by descending count
    std::size_t observed = 0;                           // distinct paths seen
    /// Set when fewer than K distinct paths were observed; all are kept.
    bool short_of_k = false;
};

/// Ranks the top-1 paths of a histogram by frequency and keeps the first K.
TopPaths top_paths_from_histogram(const PathHistogram& hist, std::size_t layers, std::size_t experts, std::size_t k);

/// Traces `stream` with the model and keeps its K most frequent paths.
TopPaths identify_top_paths(Model<float>& model, std::span<const std::int32_t> stream, std::size_t k,
                            std::size_t batch);

struct RestrictOutcome {
    TopPaths paths;
    TrainOutcome run;
};

/// Loads the early checkpoint, identifies its K most frequent paths on the
/// leading train.eval_tokens tokens of the training split, then resumes
/// training to the configured step count with routing restricted to them.
/// Outputs go to `out_dir`.
RestrictOutcome restrict_and_train(const std::string& checkpoint, const Corpus& corpus, std::size_t k,
                                   const std::string& out_dir, bool quiet = false);

}  // namespace pathmoe
