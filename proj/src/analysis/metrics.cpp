// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/analysis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pathmoe {

namespace {

// Sum of (c/total) * log2(total/c) over nonzero counts.
double entropy_of_counts(const std::vector<std::size_t>& counts, std::size_t total) {
    double h = 0;
    const double n = static_cast<double>(total);
    for (std::size_t c : counts) {
        if (c) h += static_cast<double>(c) / n * std::log2(n / static_cast<double>(c));
    }
    return h;
}

void require_tokens(const Trace& trace) {
    if (trace.tokens() == 0) throw UsageError("analysis: trace has no tokens");
}

// joint[a * N + b] counts (top1 at layer l-1 == a, top1 at layer l == b); l is 0-based.
std::vector<std::size_t> pair_counts(const Trace& trace, std::size_t l) {
    const std::size_t n = trace.experts;
    std::vector<std::size_t> joint(n * n, 0);
    for (std::size_t t = 0; t < trace.tokens(); ++t) ++joint[trace.top1(t, l - 1) * n + trace.top1(t, l)];
    return joint;
}

std::vector<std::uint32_t> aligned_set(const Trace& trace, const Alignment& align, std::size_t t, std::size_t l) {
    std::vector<std::uint32_t> s;
    for (std::uint32_t e : trace.choices(t, l)) s.push_back(align(l, e));
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

double jaccard(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    std::vector<std::uint32_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    const std::size_t uni = a.size() + b.size() - both.size();
    return uni ? static_cast<double>(both.size()) / static_cast<double>(uni) : 1.0;
}

void check_alignment(const Trace& trace, const Alignment& align) {
    if (align.labels.size() != trace.layers) throw UsageError("alignment: layer count differs from the trace");
    for (const auto& row : align.labels) {
        if (row.size() != trace.experts) throw UsageError("alignment: expert count differs from the trace");
    }
}

}  // namespace

std::vector<std::pair<Path, std::size_t>> PathHistogram::ranked() const {
    std::vector<std::pair<Path, std::size_t>> out(counts.begin(), counts.end());
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

PathHistogram path_histogram(const Trace& trace) {
    PathHistogram h;
    for (std::size_t t = 0; t < trace.tokens(); ++t) ++h.counts[trace.path(t)];
    h.total = trace.tokens();
    return h;
}

EntropyReport routing_entropy(const PathHistogram& hist) {
    if (hist.total == 0 || hist.counts.empty()) throw UsageError("routing_entropy: empty histogram");
    std::vector<std::size_t> counts;
    counts.reserve(hist.counts.size());
    for (const auto& [path, c] : hist.counts) counts.push_back(c);
    EntropyReport r;
    r.bits = entropy_of_counts(counts, hist.total);
    r.effective_paths = std::exp2(r.bits);
    r.unique_paths = hist.counts.size();
    return r;
}

double cumulative_coverage(const PathHistogram& hist, std::size_t k) {
    if (k < 1) throw UsageError("coverage: K must be at least 1");
    if (hist.total == 0) throw UsageError("coverage: empty histogram");
    std::vector<std::size_t> counts;
    for (const auto& [path, c] : hist.counts) counts.push_back(c);
    std::sort(counts.begin(), counts.end(), std::greater<>());
    const std::size_t take = std::min(k, counts.size());
    const std::size_t covered = std::accumulate(counts.begin(), counts.begin() + static_cast<std::ptrdiff_t>(take),
                                                std::size_t{0});
    return static_cast<double>(covered) / static_cast<double>(hist.total);
}

double markov_entropy(const Trace& trace) {
    require_tokens(trace);
    const std::size_t n = trace.experts, total = trace.tokens();
    std::vector<std::size_t> first(n, 0);
    for (std::size_t t = 0; t < total; ++t) ++first[trace.top1(t, 0)];
    double h = entropy_of_counts(first, total);
    const double tot = static_cast<double>(total);
    for (std::size_t l = 1; l < trace.layers; ++l) {
        const auto joint = pair_counts(trace, l);
        std::vector<std::size_t> prev(n, 0);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) prev[a] += joint[a * n + b];
        // H(E_l | E_{l-1}) = sum_ab p(a,b) log2(p(a) / p(a,b))
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t c = joint[a * n + b];
                if (c) h += static_cast<double>(c) / tot * std::log2(static_cast<double>(prev[a]) / static_cast<double>(c));
            }
        }
    }
    return h;
}

double adjacent_mi(const Trace& trace, std::size_t layer) {
    if (layer < 2 || layer > trace.layers) {
        throw UsageError("adjacent_mi: layer must lie in [2, " + std::to_string(trace.layers) + "]");
    }
    require_tokens(trace);
    const std::size_t n = trace.experts;
    const auto joint = pair_counts(trace, layer - 1);
    std::vector<std::size_t> pa(n, 0), pb(n, 0);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            pa[a] += joint[a * n + b];
            pb[b] += joint[a * n + b];
        }
    }
    const double tot = static_cast<double>(trace.tokens());
    double mi = 0;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t c = joint[a * n + b];
            if (!c) continue;
            const double num = static_cast<double>(c) * tot;
            const double den = static_cast<double>(pa[a]) * static_cast<double>(pb[b]);
            mi += static_cast<double>(c) / tot * std::log2(num / den);
        }
    }
    return mi;
}

std::vector<std::uint32_t> max_assignment(const std::vector<std::vector<double>>& weight) {
    const std::size_t n = weight.size();
    for (const auto& row : weight) {
        if (row.size() != n) throw UsageError("max_assignment: matrix must be square");
    }
    if (n == 0) return {};
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& row : weight)
        for (double w : row) top = std::max(top, w);
    // Hungarian method on cost = top - weight, 1-based potentials.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = (top - weight[i0 - 1][j - 1]) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<std::uint32_t> out(n);
    for (std::size_t j = 1; j <= n; ++j) out[j - 1] = static_cast<std::uint32_t>(match[j] - 1);
    return out;
}

Alignment identity_alignment(std::size_t layers, std::size_t experts) {
    Alignment a;
    a.labels.assign(layers, std::vector<std::uint32_t>(experts));
    for (auto& row : a.labels) std::iota(row.begin(), row.end(), 0u);
    return a;
}

Alignment align_experts(const Trace& trace) {
    if (trace.layers < 2) throw UsageError("align: needs at least two layers");
    const std::size_t n = trace.experts;
    Alignment a = identity_alignment(trace.layers, n);
    for (std::size_t l = 1; l < trace.layers; ++l) {
        const auto joint = pair_counts(trace, l);
        std::vector<std::vector<double>> w(n, std::vector<double>(n));
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t c = 0; c < n; ++c) w[p][c] = static_cast<double>(joint[p * n + c]);
        // match[c] = previous-layer expert paired with current expert c
        const auto match = max_assignment(w);
        for (std::size_t c = 0; c < n; ++c) a.labels[l][c] = a.labels[l - 1][match[c]];
    }
    return a;
}

double adjacent_agreement(const Trace& trace, const Alignment& align) {
    check_alignment(trace, align);
    require_tokens(trace);
    if (trace.layers < 2) throw UsageError("agreement: needs at least two layers");
    std::size_t same = 0;
    for (std::size_t t = 0; t < trace.tokens(); ++t) {
        for (std::size_t l = 1; l < trace.layers; ++l) {
            same += align(l, trace.top1(t, l)) == align(l - 1, trace.top1(t, l - 1)) ? 1 : 0;
        }
    }
    return static_cast<double>(same) / static_cast<double>(trace.tokens() * (trace.layers - 1));
}

double path_consistency(const Trace& trace, const Alignment& align, std::size_t window) {
    check_alignment(trace, align);
    require_tokens(trace);
    if (window < 2 || window > trace.layers) {
        throw UsageError("consistency: window must lie in [2, " + std::to_string(trace.layers) + "]");
    }
    const std::size_t L = trace.layers, windows = L - window + 1;
    double sum = 0;
    std::vector<double> pair(L);
    for (std::size_t t = 0; t < trace.tokens(); ++t) {
        auto prev = aligned_set(trace, align, t, 0);
        for (std::size_t l = 1; l < L; ++l) {
            auto cur = aligned_set(trace, align, t, l);
            pair[l] = jaccard(prev, cur);
            prev = std::move(cur);
        }
        for (std::size_t s = 0; s < windows; ++s) {
            double w = 0;
            for (std::size_t l = s + 1; l < s + window; ++l) w += pair[l];
            sum += w / static_cast<double>(window - 1);
        }
    }
    return sum / static_cast<double>(trace.tokens() * windows);
}

double sustained_engagement(const Trace& trace, const Alignment& align, std::size_t min_run) {
    check_alignment(trace, align);
    require_tokens(trace);
    if (min_run < 1) throw UsageError("engagement: run length must be at least 1");
    std::size_t runs = 0, long_runs = 0;
    std::vector<std::uint8_t> member(trace.layers * trace.experts);
    for (std::size_t t = 0; t < trace.tokens(); ++t) {
        std::fill(member.begin(), member.end(), 0);
        for (std::size_t l = 0; l < trace.layers; ++l)
            for (std::uint32_t e : trace.choices(t, l)) member[align(l, e) * trace.layers + l] = 1;
        for (std::size_t e = 0; e < trace.experts; ++e) {
            std::size_t len = 0;
            for (std::size_t l = 0; l <= trace.layers; ++l) {
                if (l < trace.layers && member[e * trace.layers + l]) {
                    ++len;
                } else if (len) {
                    ++runs;
                    long_runs += len >= min_run ? 1 : 0;
                    len = 0;
                }
            }
        }
    }
    return static_cast<double>(long_runs) / static_cast<double>(runs);
}

std::vector<double> token_entropy_profile(const Trace& trace, const Alignment& align) {
    check_alignment(trace, align);
    require_tokens(trace);
    std::vector<double> profile(trace.layers, 0.0);
    std::vector<std::size_t> counts(trace.experts);
    for (std::size_t t = 0; t < trace.tokens(); ++t) {
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t l = 0; l < trace.layers; ++l) {
            ++counts[align(l, trace.top1(t, l))];
            profile[l] += entropy_of_counts(counts, l + 1);
        }
    }
    for (double& v : profile) v /= static_cast<double>(trace.tokens());
    return profile;
}

PerturbResult perturb_and_eval(Model<float>& model, double p, std::span<const std::int32_t> stream,
                               std::uint64_t seed, std::size_t batch) {
    if (!(p >= 0 && p <= 1)) throw UsageError("robustness: p must lie in [0, 1]");
    const auto& mc = model.config();
    PerturbResult r;
    r.maps.assign(mc.layers, {});
    Rng rng(derive_seed(seed, 0x9E2A));
    for (std::size_t l = 0; l < mc.layers; ++l) {
        const bool hit = rng.uniform() < p;
        const auto perm = rng.permutation(mc.experts);
        if (!hit) continue;
        r.maps[l].assign(perm.begin(), perm.end());
    }
    r.base_ppl = perplexity(model, stream, batch);
    ForwardOptions opts;
    opts.expert_maps = &r.maps;
    r.perturbed_ppl = perplexity(model, stream, batch, opts);
    r.delta_percent = (r.perturbed_ppl - r.base_ppl) / r.base_ppl * 100.0;
    return r;
}

}  // namespace pathmoe
