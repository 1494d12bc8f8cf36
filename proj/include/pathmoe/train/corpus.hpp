// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pathmoe {

/// Byte-level token streams: the tail `val_fraction` of the file is held out.
struct Corpus {
    std::vector<std::int32_t> train;
    std::vector<std::int32_t> val;
};

std::vector<std::int32_t> byte_tokens(const std::string& text);

/// Throws DataError if unreadable or empty.
Corpus load_corpus(const std::string& path, double val_fraction = 0.05);
Corpus split_corpus(const std::string& text, double val_fraction = 0.05);

/// Random windows of seq+1 tokens; the draw depends only on (seed, step).
/// Throws DataError if the stream is shorter than one batch of windows.
void sample_batch(const std::vector<std::int32_t>& stream, std::size_t batch, std::size_t seq,
                  std::uint64_t seed, std::uint64_t step, std::vector<std::int32_t>& inputs,
                  std::vector<std::int32_t>& targets);

/// Deterministic English-like text built from sentence templates over a
/// lexicon of names, roles, speech verbs, adverbs, dates, numbers and
/// punctuation. Returns at least `bytes` bytes.
std::string synthetic_text(std::size_t bytes, std::uint64_t seed);

}  // namespace pathmoe
