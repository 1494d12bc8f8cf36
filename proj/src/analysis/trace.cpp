// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/analysis/trace.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace pathmoe {

namespace {

constexpr const char* kFormat = "pathmoe-trace";
constexpr int kVersion = 1;

bool is_word_byte(std::int32_t b) { return b >= 0 && b < 128 && std::isalnum(b); }

}  // namespace

std::vector<std::uint32_t> Trace::path(std::size_t t) const {
    std::vector<std::uint32_t> p(layers);
    for (std::size_t l = 0; l < layers; ++l) p[l] = top1(t, l);
    return p;
}

void Trace::validate() const {
    const std::size_t n = tokens();
    if (layers == 0 || experts == 0 || top_k == 0 || top_k > experts) {
        throw DataError("trace: invalid dimensions");
    }
    if (doc.size() != n || pos.size() != n || word.size() != n || topk.size() != n * layers * top_k ||
        gates.size() != topk.size()) {
        throw DataError("trace: field sizes disagree with the token count");
    }
    for (std::uint32_t e : topk) {
        if (e >= experts) throw DataError("trace: expert index " + std::to_string(e) + " out of range");
    }
}

Trace make_trace(std::size_t layers, std::size_t experts, std::size_t top_k, std::vector<std::uint32_t> topk) {
    Trace t;
    t.layers = layers;
    t.experts = experts;
    t.top_k = top_k;
    const std::size_t per = layers * top_k;
    if (per == 0 || topk.size() % per != 0) throw UsageError("make_trace: choice count is not a multiple of L*k");
    const std::size_t n = topk.size() / per;
    t.topk = std::move(topk);
    t.gates.assign(t.topk.size(), 1.0f);
    t.doc.assign(n, 0);
    t.pos.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.pos[i] = static_cast<std::uint32_t>(i);
    t.token.assign(n, 0);
    t.word.assign(n, "");
    t.validate();
    return t;
}

std::string word_at(std::span<const std::int32_t> stream, std::size_t i) {
    const std::int32_t b = stream[i];
    if (is_word_byte(b)) {
        std::size_t lo = i, hi = i + 1;
        while (lo > 0 && is_word_byte(stream[lo - 1])) --lo;
        while (hi < stream.size() && is_word_byte(stream[hi])) ++hi;
        std::string w;
        for (std::size_t j = lo; j < hi; ++j) w.push_back(static_cast<char>(stream[j]));
        return w;
    }
    if (b >= 32 && b < 127) return std::string(1, static_cast<char>(b));
    if (b == '\n' || b == '\t') return std::string(1, static_cast<char>(b));
    char buf[16];
    std::snprintf(buf, sizeof buf, "<0x%02X>", static_cast<unsigned>(b & 0xFF));
    return buf;
}

Trace record_trace(Model<float>& model, std::span<const std::int32_t> stream, std::size_t batch,
                   const ForwardOptions& opts, const std::string& config_hash) {
    if (stream.empty()) throw DataError("trace: empty token stream");
    if (batch < 1) throw UsageError("trace: batch must be positive");
    const auto& mc = model.config();
    Trace tr;
    tr.layers = mc.layers;
    tr.experts = mc.experts;
    tr.top_k = mc.top_k;
    tr.config_hash = config_hash;
    const std::size_t n = stream.size(), per = mc.layers * mc.top_k;
    tr.doc.reserve(n);
    tr.pos.reserve(n);
    tr.token.reserve(n);
    tr.word.reserve(n);
    tr.topk.reserve(n * per);
    tr.gates.reserve(n * per);

    ForwardOptions o = opts;
    o.need_aux = false;
    const std::size_t seq = mc.seq_len;
    auto run = [&](std::size_t first_window, std::size_t windows, std::size_t len) {
        const std::size_t start = first_window * seq;
        std::vector<std::int32_t> in(stream.begin() + static_cast<std::ptrdiff_t>(start),
                                     stream.begin() + static_cast<std::ptrdiff_t>(start + windows * len));
        Tape<float> tape;
        tape.set_grad_enabled(false);
        auto fwd = model.forward(tape, in, windows, len, o);
        for (std::size_t r = 0; r < windows * len; ++r) {
            tr.doc.push_back(static_cast<std::uint32_t>(first_window + r / len));
            tr.pos.push_back(static_cast<std::uint32_t>(r % len));
            tr.token.push_back(in[r]);
            tr.word.push_back(word_at(stream, start + r));
            for (const auto& lr : fwd.routing) {
                for (std::size_t j = 0; j < mc.top_k; ++j) {
                    tr.topk.push_back(lr.topk[r * mc.top_k + j]);
                    tr.gates.push_back(lr.gates[r * mc.top_k + j]);
                }
            }
        }
    };
    const std::size_t full = n / seq;
    for (std::size_t w = 0; w < full; w += batch) run(w, std::min(batch, full - w), seq);
    if (n % seq) run(full, 1, n % seq);
    return tr;
}

void write_trace(const std::string& path, const Trace& trace) {
    trace.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(path + ": cannot write trace");
    nlohmann::json header{{"format", kFormat},         {"version", kVersion},
                          {"config_hash", trace.config_hash}, {"layers", trace.layers},
                          {"experts", trace.experts}, {"top_k", trace.top_k},
                          {"tokens", trace.tokens()}};
    out << header.dump() << "\n";
    const std::size_t k = trace.top_k;
    for (std::size_t t = 0; t < trace.tokens(); ++t) {
        nlohmann::json layers = nlohmann::json::array();
        for (std::size_t l = 0; l < trace.layers; ++l) {
            const std::size_t at = (t * trace.layers + l) * k;
            layers.push_back({{"topk", std::vector<std::uint32_t>(trace.topk.begin() + at, trace.topk.begin() + at + k)},
                              {"gates", std::vector<float>(trace.gates.begin() + at, trace.gates.begin() + at + k)}});
        }
        nlohmann::json rec{{"doc", trace.doc[t]},     {"pos", trace.pos[t]},   {"token", trace.token[t]},
                           {"word", trace.word[t]},   {"layers", std::move(layers)}};
        out << rec.dump() << "\n";
    }
    if (!out) throw DataError(path + ": write failed");
}

Trace read_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open trace");
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty trace file");
    Trace tr;
    std::size_t lineno = 1;
    try {
        const auto h = nlohmann::json::parse(line);
        if (h.value("format", "") != kFormat) throw DataError(path + ": not a pathmoe trace");
        if (h.value("version", 0) != kVersion) {
            throw DataError(path + ": unsupported trace version " + std::to_string(h.value("version", 0)));
        }
        tr.config_hash = h.value("config_hash", "");
        tr.layers = h.at("layers").get<std::size_t>();
        tr.experts = h.at("experts").get<std::size_t>();
        tr.top_k = h.at("top_k").get<std::size_t>();
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto r = nlohmann::json::parse(line);
            tr.doc.push_back(r.at("doc").get<std::uint32_t>());
            tr.pos.push_back(r.at("pos").get<std::uint32_t>());
            tr.token.push_back(r.at("token").get<std::int32_t>());
            tr.word.push_back(r.value("word", ""));
            const auto& layers = r.at("layers");
            if (layers.size() != tr.layers) throw DataError("wrong layer count");
            for (const auto& l : layers) {
                const auto& ids = l.at("topk");
                const auto& gs = l.at("gates");
                if (ids.size() != tr.top_k || gs.size() != tr.top_k) throw DataError("wrong top-k width");
                for (std::size_t j = 0; j < tr.top_k; ++j) {
                    tr.topk.push_back(ids[j].get<std::uint32_t>());
                    tr.gates.push_back(gs[j].get<float>());
                }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    tr.validate();
    return tr;
}

}  // namespace pathmoe
