// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Routing traces: per token occurrence, the top-k experts and gates chosen at
// every layer. Paths are the argmax (top-1) picks.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pathmoe/model/model.hpp"

namespace pathmoe {

struct Trace {
    std::size_t layers = 0, experts = 0, top_k = 0;
    std::string config_hash;

    std::vector<std::uint32_t> doc, pos;
    std::vector<std::int32_t> token;
    /// Surrounding word of each byte: the maximal alphanumeric run holding it,
    /// or the character itself.
    std::vector<std::string> word;
    std::vector<std::uint32_t> topk;  // [tokens][layers][top_k]
    std::vector<float> gates;         // same layout

    std::size_t tokens() const { return token.size(); }
    std::uint32_t top1(std::size_t t, std::size_t layer) const { return topk[(t * layers + layer) * top_k]; }
    std::span<const std::uint32_t> choices(std::size_t t, std::size_t layer) const {
        return {topk.data() + (t * layers + layer) * top_k, top_k};
    }
    std::vector<std::uint32_t> path(std::size_t t) const;

    /// Throws DataError on inconsistent sizes or out-of-range experts.
    void validate() const;
};

/// Trace with one pseudo document, unit gates and empty words; `topk` is
/// [tokens][layers][top_k]. Used by tests and synthetic analyses.
Trace make_trace(std::size_t layers, std::size_t experts, std::size_t top_k, std::vector<std::uint32_t> topk);

/// Runs inference over `stream` in consecutive windows of seq_len tokens
/// (doc = window index, pos = offset in the window) and records every token.
Trace record_trace(Model<float>& model, std::span<const std::int32_t> stream, std::size_t batch,
                   const ForwardOptions& opts = {}, const std::string& config_hash = "");

/// Word around byte i of a byte stream; non-printable bytes become "<0xHH>".
std::string word_at(std::span<const std::int32_t> stream, std::size_t i);

/// JSON lines: a header object, then one record per token occurrence.
void write_trace(const std::string& path, const Trace& trace);
Trace read_trace(const std::string& path);

}  // namespace pathmoe
