// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "pathmoe/analysis/metrics.hpp"

namespace pathmoe {

/// Word lists and morphological patterns checked in a fixed precedence order:
/// every lexical category first (in table order), then the patterns.
class CategoryTable {
public:
    struct Pattern {
        std::string category;
        std::string kind;  // suffix | capitalized | digits | ordinal | punctuation
        std::vector<std::string> suffixes;
        std::size_t min_length = 0;
        std::string chars;
    };

    static CategoryTable from_json(const nlohmann::json& j);
    /// Throws DataError when the file is missing or malformed.
    static CategoryTable load(const std::string& path);
    /// The table shipped in data/token_categories.json.
    static CategoryTable bundled();

    /// Category names in precedence order, followed by "other".
    const std::vector<std::string>& names() const { return names_; }
    std::string categorize(const std::string& word) const;

private:
    std::vector<std::pair<std::string, std::set<std::string>>> lexical_;
    std::vector<Pattern> patterns_;
    std::vector<std::string> names_;
};

std::vector<std::string> categorize_tokens(const CategoryTable& table, const std::vector<std::string>& words);

struct PathTokenEntry {
    Path path;
    std::size_t count = 0;
    double frequency = 0;
    std::vector<std::pair<std::string, std::size_t>> tokens;  // by descending count
    std::map<std::string, std::size_t> categories;
    std::string modal_category;
    /// Share of the path's tokens in its modal category.
    double concentration = 0;
};

std::vector<PathTokenEntry> path_token_report(const Trace& trace, const PathHistogram& hist,
                                              const CategoryTable& table, std::size_t top_paths,
                                              std::size_t top_tokens);

/// Unweighted mean concentration over the report's paths.
double mean_concentration(const std::vector<PathTokenEntry>& report);

nlohmann::json to_json(const PathTokenEntry& entry);

}  // namespace pathmoe
