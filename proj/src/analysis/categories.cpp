// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/analysis/categories.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#ifndef PATHMOE_DATA_DIR
#define PATHMOE_DATA_DIR "data"
#endif

namespace pathmoe {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool matches(const CategoryTable::Pattern& p, const std::string& word, const std::string& low) {
    if (p.kind == "suffix") {
        if (word.size() < p.min_length) return false;
        if (!std::all_of(word.begin(), word.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }))
            return false;
        return std::any_of(p.suffixes.begin(), p.suffixes.end(), [&](const auto& s) { return ends_with(low, s); });
    }
    if (p.kind == "capitalized") {
        return word.size() > 1 && std::isupper(static_cast<unsigned char>(word[0])) &&
               std::all_of(word.begin(), word.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
    }
    if (p.kind == "digits") return all_digits(word);
    if (p.kind == "ordinal") {
        if (word.size() < 3) return false;
        const std::string head = word.substr(0, word.size() - 2), tail = low.substr(low.size() - 2);
        return all_digits(head) && (tail == "st" || tail == "nd" || tail == "rd" || tail == "th");
    }
    if (p.kind == "punctuation") return word.size() == 1 && p.chars.find(word[0]) != std::string::npos;
    return false;
}

}  // namespace

CategoryTable CategoryTable::from_json(const nlohmann::json& j) {
    CategoryTable t;
    try {
        if (j.value("format", "") != "pathmoe-token-categories") throw DataError("not a token category table");
        if (j.value("version", 0) != 1) throw DataError("unsupported category table version");
        for (const auto& entry : j.at("lexical")) {
            std::set<std::string> words;
            for (const auto& w : entry.at("words")) words.insert(lower(w.get<std::string>()));
            t.lexical_.emplace_back(entry.at("category").get<std::string>(), std::move(words));
            t.names_.push_back(t.lexical_.back().first);
        }
        for (const auto& entry : j.at("patterns")) {
            Pattern p;
            p.category = entry.at("category").get<std::string>();
            p.kind = entry.at("kind").get<std::string>();
            if (p.kind != "suffix" && p.kind != "capitalized" && p.kind != "digits" && p.kind != "ordinal" &&
                p.kind != "punctuation") {
                throw DataError("unknown pattern kind '" + p.kind + "'");
            }
            if (entry.contains("suffixes")) p.suffixes = entry.at("suffixes").get<std::vector<std::string>>();
            p.min_length = entry.value("min_length", std::size_t{0});
            p.chars = entry.value("chars", "");
            t.patterns_.push_back(p);
            if (std::find(t.names_.begin(), t.names_.end(), p.category) == t.names_.end()) {
                t.names_.push_back(p.category);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("token categories: ") + e.what());
    }
    t.names_.push_back("other");
    return t;
}

CategoryTable CategoryTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open token category table");
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

CategoryTable CategoryTable::bundled() { return load(std::string(PATHMOE_DATA_DIR) + "/token_categories.json"); }

std::string CategoryTable::categorize(const std::string& word) const {
    const std::string low = lower(word);
    for (const auto& [name, words] : lexical_) {
        if (words.count(low)) return name;
    }
    for (const auto& p : patterns_) {
        if (matches(p, word, low)) return p.category;
    }
    return "other";
}

std::vector<std::string> categorize_tokens(const CategoryTable& table, const std::vector<std::string>& words) {
    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(table.categorize(w));
    return out;
}

std::vector<PathTokenEntry> path_token_report(const Trace& trace, const PathHistogram& hist,
                                              const CategoryTable& table, std::size_t top_paths,
                                              std::size_t top_tokens) {
    if (hist.total == 0) throw UsageError("report: empty histogram");
    const auto ranked = hist.ranked();
    const std::size_t n = std::min(top_paths, ranked.size());
    std::map<Path, std::size_t> slot;
    for (std::size_t i = 0; i < n; ++i) slot[ranked[i].first] = i;

    std::vector<std::map<std::string, std::size_t>> words(n);
    std::vector<PathTokenEntry> out(n);
    std::map<std::string, std::string> memo;
    for (std::size_t t = 0; t < trace.tokens(); ++t) {
        const auto it = slot.find(trace.path(t));
        if (it == slot.end()) continue;
        const std::string& w = trace.word[t];
        ++words[it->second][w];
        auto m = memo.find(w);
        if (m == memo.end()) m = memo.emplace(w, table.categorize(w)).first;
        ++out[it->second].categories[m->second];
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& e = out[i];
        e.path = ranked[i].first;
        e.count = ranked[i].second;
        e.frequency = static_cast<double>(e.count) / static_cast<double>(hist.total);
        e.tokens.assign(words[i].begin(), words[i].end());
        std::stable_sort(e.tokens.begin(), e.tokens.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        if (e.tokens.size() > top_tokens) e.tokens.resize(top_tokens);
        std::size_t best = 0, seen = 0;
        for (const auto& name : table.names()) {
            const auto c = e.categories.find(name);
            if (c == e.categories.end()) continue;
            seen += c->second;
            if (c->second > best) {
                best = c->second;
                e.modal_category = name;
            }
        }
        e.concentration = seen ? static_cast<double>(best) / static_cast<double>(seen) : 0.0;
    }
    return out;
}

double mean_concentration(const std::vector<PathTokenEntry>& report) {
    if (report.empty()) return 0;
    double s = 0;
    for (const auto& e : report) s += e.concentration;
    return s / static_cast<double>(report.size());
}

nlohmann::json to_json(const PathTokenEntry& e) {
    nlohmann::json tokens = nlohmann::json::array();
    for (const auto& [w, c] : e.tokens) tokens.push_back({{"token", w}, {"count", c}});
    return {{"path", e.path},
            {"count", e.count},
            {"frequency", e.frequency},
            {"tokens", tokens},
            {"categories", e.categories},
            {"modal_category", e.modal_category},
            {"concentration", e.concentration}};
}

}  // namespace pathmoe
