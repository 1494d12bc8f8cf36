// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance <work dir>
//
// PATHMOE_ACCEPTANCE_PROFILE=desk trains at the full desk configuration
// (hours on one core); the default "ci" profile keeps the architecture
// (8 layers, 8 experts, top-2) at reduced width and step count.
// PATHMOE_ACCEPTANCE_REUSE=1 reuses finished runs found in the work dir
// when their configuration hash matches.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "pathmoe/analysis/metrics.hpp"
#include "pathmoe/analysis/trace.hpp"
#include "pathmoe/model/gradient_suite.hpp"
#include "pathmoe/train/restrict.hpp"
#include "pathmoe/train/trainer.hpp"
#include "support/oracles.hpp"
#include "support/traces.hpp"

using namespace pathmoe;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Profile {
    std::string name;
    ModelConfig model;
    TrainConfig train;
    std::size_t corpus_bytes = 1100000;
};

Profile make_profile(const std::string& name) {
    Profile p;
    p.name = name;
    auto& m = p.model;
    m.layers = 8;
    m.experts = 8;
    m.top_k = 2;
    m.alpha = 0.01;
    auto& t = p.train;
    if (name == "desk") {
        m.d_model = 128;
        m.n_heads = 4;
        m.d_ffn = 128;
        m.seq_len = 128;
        t.steps = 3000;
        t.batch = 32;
        t.warmup = 100;
        t.peak_lr = 3e-4;
        t.eval_every = 500;
    } else if (name == "ci") {
        m.d_model = 64;
        m.n_heads = 4;
        m.d_ffn = 64;
        m.seq_len = 64;
        t.steps = 2400;
        t.batch = 8;
        t.warmup = 40;
        t.peak_lr = 3e-3;
        t.eval_every = 400;
    } else {
        throw UsageError("PATHMOE_ACCEPTANCE_PROFILE: expected ci or desk, got '" + name + "'");
    }
    t.eval_tokens = 16384;
    t.eval_batch = 16;
    return p;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool env_flag(const char* name) {
    const char* v = std::getenv(name);
    return v && std::string(v) == "1";
}

// Metric rows read back from a metrics CSV.
std::vector<MetricRow> read_metrics(const fs::path& path) {
    std::ifstream in(path);
    std::vector<MetricRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line[0] == 's') continue;
        std::stringstream ss(line);
        std::vector<double> v;
        for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
        MetricRow r;
        r.step = static_cast<std::size_t>(v.at(0));
        r.lr = v.at(1);
        r.ce = v.at(2);
        r.aux = v.at(3);
        r.ppl = v.at(4);
        r.tokens_per_sec = v.at(5);
        r.max_load_ratio.assign(v.begin() + 6, v.end());
        rows.push_back(std::move(r));
    }
    return rows;
}

double last_eval_ppl(const fs::path& path) {
    std::ifstream in(path);
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#' && line[0] != 's') last = line;
    return std::stod(last.substr(last.rfind(',') + 1));
}

struct Run {
    std::string name;
    RunConfig config;
    std::vector<MetricRow> rows;
    double eval_ppl = 0;
    fs::path dir;
    Trace trace;
    PathHistogram hist;
};

class Suite {
public:
    Suite(Profile profile, fs::path work) : profile_(std::move(profile)), work_(std::move(work)) {
        fs::create_directories(work_);
        const auto corpus_path = work_ / "corpus.txt";
        const std::string text = synthetic_text(profile_.corpus_bytes, 2026);
        std::ofstream(corpus_path, std::ios::binary | std::ios::trunc) << text;
        corpus_ = split_corpus(text, profile_.train.val_fraction);
        const std::size_t n = std::min(profile_.train.eval_tokens, corpus_.val.size());
        eval_.assign(corpus_.val.begin(), corpus_.val.begin() + static_cast<std::ptrdiff_t>(n));
    }

    const Profile& profile() const { return profile_; }
    const Corpus& corpus() const { return corpus_; }
    const std::vector<std::int32_t>& eval_stream() const { return eval_; }
    const fs::path& work() const { return work_; }

    RunConfig config(StrategyKind kind, std::size_t block, double alpha, std::uint64_t seed) const {
        RunConfig r;
        r.model = profile_.model;
        r.model.strategy.kind = kind;
        r.model.strategy.block_size = block;
        r.model.alpha = alpha;
        r.train = profile_.train;
        r.seed = seed;
        return r;
    }

    Run& run(const std::string& name, const RunConfig& cfg) {
        if (auto it = runs_.find(name); it != runs_.end()) return it->second;
        Run r;
        r.name = name;
        r.config = cfg;
        r.config.out_dir = (work_ / name).string();
        r.dir = r.config.out_dir;
        const auto final_ckpt = r.dir / "final.pmlb";
        bool reuse = false;
        if (env_flag("PATHMOE_ACCEPTANCE_REUSE") && fs::exists(final_ckpt) && fs::exists(r.dir / "eval.csv")) {
            try {
                reuse = load_model(final_ckpt.string()).run.hash() == r.config.hash();
            } catch (const Error&) {
                reuse = false;
            }
        }
        const auto t0 = Clock::now();
        if (!reuse) {
            TrainHooks hooks;
            hooks.quiet = true;
            train(r.config, corpus_, hooks);
        }
        r.rows = read_metrics(r.dir / "metrics.csv");
        r.eval_ppl = last_eval_ppl(r.dir / "eval.csv");
        auto loaded = load_model(final_ckpt.string());
        r.trace = record_trace(*loaded.model, eval_, profile_.train.eval_batch, {}, hex64(r.config.hash()));
        r.hist = path_histogram(r.trace);
        std::cerr << "  run " << name << (reuse ? " (reused)" : "") << ": eval ppl " << num(r.eval_ppl) << ", "
                  << num(std::chrono::duration<double>(Clock::now() - t0).count()) << " s\n";
        return runs_.emplace(name, std::move(r)).first->second;
    }

    const std::map<std::string, Run>& runs() const { return runs_; }

private:
    Profile profile_;
    fs::path work_;
    Corpus corpus_;
    std::vector<std::int32_t> eval_;
    std::map<std::string, Run> runs_;
};

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;
nlohmann::json report = nlohmann::json::object();

void emit(int id, const std::string& name, const std::function<Verdict()>& body) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << v.detail << "\n" << std::flush;
    report[std::to_string(id)] = {{"name", name}, {"pass", v.pass}, {"detail", v.detail}, {"seconds", secs}};
}

// ---- criteria ---------------------------------------------------------------

Verdict gradient_criterion() {
    const auto t0 = Clock::now();
    const auto suite = gradient_suite(1);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    double worst = 0;
    std::string worst_name;
    for (const auto& e : suite) {
        if (!(e.max_rel_error <= worst)) {
            worst = e.max_rel_error;
            worst_name = e.name;
        }
    }
    const bool ok = worst < 1e-4 && secs < 60.0;
    return {ok, std::to_string(suite.size()) + " checks, worst " + num(worst) + " (" + worst_name + "), " +
                    num(secs) + " s"};
}

std::vector<Trace> random_traces;

Verdict oracle_criterion() {
    double worst = 0;
    std::size_t compared = 0;
    auto cmp = [&](double a, double b) {
        worst = std::max(worst, std::abs(a - b));
        ++compared;
    };
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        Rng rng(derive_seed(seed, 17));
        const std::size_t n = 1 + rng.below(4), layers = 1 + rng.below(3), k = 1 + rng.below(n);
        const std::size_t tokens = 1 + rng.below(100);
        const auto t = testing::random_trace(layers, n, k, tokens, seed, rng.uniform());
        const auto h = path_histogram(t);
        cmp(routing_entropy(h).bits, oracle::routing_entropy(t));
        cmp(markov_entropy(t), oracle::markov_entropy(t));
        for (std::size_t kk = 1; kk <= 6; ++kk) cmp(cumulative_coverage(h, kk), oracle::coverage(t, kk));
        if (layers >= 2) {
            for (std::size_t l = 2; l <= layers; ++l) cmp(adjacent_mi(t, l), oracle::adjacent_mi(t, l));
            const auto a = align_experts(t);
            for (std::size_t w = 2; w <= layers; ++w) cmp(path_consistency(t, a, w), oracle::consistency(t, a.labels, w));
        }
        const auto a = layers >= 2 ? align_experts(t) : identity_alignment(layers, n);
        for (std::size_t x = 1; x <= layers + 1; ++x)
            cmp(sustained_engagement(t, a, x), oracle::engagement(t, a.labels, x));
        random_traces.push_back(t);
    }
    // alignment against exhaustive permutation search, N <= 6
    std::size_t align_cases = 0, align_bad = 0;
    for (std::size_t n = 1; n <= 6; ++n) {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const auto t = testing::random_trace(3, n, 1, 60, 1000 * n + seed, 0.6);
            const auto a = align_experts(t);
            double best = 0;
            for (std::size_t l = 1; l < t.layers; ++l) {
                std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
                for (std::size_t i = 0; i < t.tokens(); ++i) w[t.top1(i, l - 1)][t.top1(i, l)] += 1;
                best += oracle::best_matching(w);
            }
            const double got = adjacent_agreement(t, a) * static_cast<double>(t.tokens() * (t.layers - 1));
            ++align_cases;
            if (std::abs(got - best) > 1e-9) ++align_bad;
        }
    }
    const bool ok = worst <= 1e-9 && align_bad == 0;
    return {ok, std::to_string(compared) + " metric comparisons, max abs diff " + num(worst) + "; alignment " +
                    std::to_string(align_cases - align_bad) + "/" + std::to_string(align_cases) +
                    " match exhaustive search"};
}

Verdict closed_form_criterion() {
    const std::size_t n = 16;
    const double alpha = 0.01;
    LayerRouting<double> balanced;
    balanced.rows = n;
    balanced.experts = n;
    balanced.top_k = 1;
    balanced.probs.assign(n * n, 1.0 / static_cast<double>(n));
    for (std::uint32_t r = 0; r < n; ++r) balanced.topk.push_back(r);
    balanced.gates.assign(n, 1.0 / static_cast<double>(n));

    LayerRouting<double> collapsed = balanced;
    collapsed.probs.assign(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r) collapsed.probs[r * n] = 1.0;
    collapsed.topk.assign(n, 0);

    const double vb = load_balance_value(balanced, alpha), vc = load_balance_value(collapsed, alpha);
    // the same through the differentiable term
    auto taped = [&](const LayerRouting<double>& r) {
        Tape<double> tape;
        auto p = tape.constant({r.rows, r.experts}, r.probs);
        return alpha * load_balance_loss(p, std::span<const std::uint32_t>(r.topk), r.top_k).item();
    };
    const double tb = taped(balanced), tc = taped(collapsed);
    const bool ok = std::abs(vb - 0.01) <= 1e-9 && std::abs(vc - 0.16) <= 1e-9 && std::abs(tb - 0.01) <= 1e-9 &&
                    std::abs(tc - 0.16) <= 1e-9;
    return {ok, "balanced " + num(vb) + " (taped " + num(tb) + "), collapsed " + num(vc) + " (taped " + num(tc) +
                    "), N=16, alpha=0.01"};
}

Verdict determinism_criterion(const fs::path& work, const Corpus& corpus) {
    RunConfig r;
    r.model.layers = 4;
    r.model.experts = 4;
    r.model.top_k = 2;
    r.model.d_model = 16;
    r.model.n_heads = 2;
    r.model.d_ffn = 16;
    r.model.seq_len = 32;
    r.model.strategy.kind = StrategyKind::PathShared;
    r.model.strategy.block_size = 2;
    r.train.steps = 40;
    r.train.batch = 4;
    r.train.warmup = 4;
    r.train.eval_every = 20;
    r.train.eval_tokens = 2048;
    r.seed = 9;
    std::vector<std::string> files;
    for (const char* name : {"determinism_a", "determinism_b"}) {
        r.out_dir = (work / name).string();
        fs::remove_all(r.out_dir);
        TrainHooks hooks;
        hooks.quiet = true;
        const auto out = train(r, corpus, hooks);
        auto loaded = load_model(out.final_checkpoint);
        const std::span<const std::int32_t> data(corpus.val.data(), 4096);
        const auto trace = record_trace(*loaded.model, data, 8, {}, hex64(r.hash()));
        write_trace((fs::path(r.out_dir) / "trace.jsonl").string(), trace);
        random_traces.push_back(trace);
    }
    std::size_t same = 0, total = 0;
    std::string differing;
    for (const char* f : {"metrics.csv", "eval.csv", "final.pmlb", "trace.jsonl"}) {
        ++total;
        if (slurp(work / "determinism_a" / f) == slurp(work / "determinism_b" / f)) {
            ++same;
        } else {
            differing += std::string(" ") + f;
        }
    }
    return {same == total, std::to_string(same) + "/" + std::to_string(total) +
                               " artifacts byte-identical across two runs (metrics, eval log, checkpoint, trace)" +
                               (differing.empty() ? "" : "; differ:" + differing)};
}

Verdict inequality_criterion(const Suite& s) {
    std::size_t traces = 0, violations = 0;
    double worst_gap = 0;
    auto check = [&](const Trace& t) {
        ++traces;
        const double h = routing_entropy(path_histogram(t)).bits;
        const double m = markov_entropy(t);
        const double bound = static_cast<double>(t.layers) * std::log2(static_cast<double>(t.experts));
        // 1e-12 absorbs summation-order rounding when the bounds are tight
        bool ok = h >= 0 && h <= m + 1e-12 && m <= bound + 1e-12;
        for (std::size_t l = 2; l <= t.layers; ++l) ok = ok && adjacent_mi(t, l) >= 0;
        worst_gap = std::min(worst_gap, m - h);
        violations += ok ? 0 : 1;
    };
    for (const auto& t : random_traces) check(t);
    for (const auto& [name, r] : s.runs()) check(r.trace);
    return {violations == 0, std::to_string(traces) + " traces (" + std::to_string(s.runs().size()) +
                                 " from trained models), " + std::to_string(violations) + " violations"};
}

Verdict entropy_criterion(Suite& s) {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {1, 2}) {
        const double hi = routing_entropy(s.runs().at("indep_s" + std::to_string(seed)).hist).bits;
        detail += "seed " + std::to_string(seed) + ": indep " + num(hi);
        for (std::size_t b : {2, 4}) {
            const double hp = routing_entropy(s.runs().at("path" + std::to_string(b) + "_s" + std::to_string(seed)).hist).bits;
            ok = ok && hp < hi;
            detail += ", B=" + std::to_string(b) + " " + num(hp);
        }
        detail += seed == 1 ? " bits; " : " bits";
    }
    return {ok, detail};
}

Verdict consistency_criterion(Suite& s) {
    const auto& ind = s.runs().at("indep_s1").trace;
    const auto& pth = s.runs().at("path4_s1").trace;
    const auto ai = align_experts(ind), ap = align_experts(pth);
    bool ok = true;
    double min_gap = 1e9;
    std::string detail = "w: path/indep";
    for (std::size_t w = 2; w <= ind.layers; ++w) {
        const double ci = path_consistency(ind, ai, w), cp = path_consistency(pth, ap, w);
        min_gap = std::min(min_gap, cp - ci);
        ok = ok && cp - ci >= 0.10;
        detail += " " + std::to_string(w) + ":" + num(cp) + "/" + num(ci);
    }
    return {ok, detail + "; smallest gap " + num(100 * min_gap) + " pp"};
}

Verdict load_balance_criterion(Suite& s) {
    const auto& r = s.runs().at("path4_a0_s1");
    const std::size_t from = r.rows.size() - r.rows.size() / 5;
    double worst = 0;
    for (std::size_t i = from; i < r.rows.size(); ++i)
        for (double v : r.rows[i].max_load_ratio) worst = std::max(worst, v);
    // trailing 100-step moving average sampled every 100 steps
    std::vector<double> avg;
    for (std::size_t end = 100; end <= r.rows.size(); end += 100) {
        double sum = 0;
        for (std::size_t i = end - 100; i < end; ++i) sum += r.rows[i].ce;
        avg.push_back(sum / 100.0);
    }
    std::size_t rises = 0;
    for (std::size_t i = 1; i < avg.size(); ++i) rises += avg[i] > avg[i - 1] ? 1 : 0;
    std::string curve;
    for (double a : avg) curve += " " + num(a);
    return {worst < 4.0 && rises == 0, "max/mean load over final 20% " + num(worst) + " (< 4); 100-step mean CE" +
                                           curve + "; " + std::to_string(rises) + " increases"};
}

Verdict robustness_criterion(Suite& s) {
    auto measure = [&](const std::string& name, double p) {
        auto loaded = load_model((s.runs().at(name).dir / "final.pmlb").string());
        double mean = 0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed)
            mean += perturb_and_eval(*loaded.model, p, s.eval_stream(), seed, s.profile().train.eval_batch).delta_percent;
        return mean / 5.0;
    };
    const double i1 = measure("indep_s1", 1.0), p1 = measure("path4_s1", 1.0);
    const double i0 = measure("indep_s1", 0.0), p0 = measure("path4_s1", 0.0);
    const bool ok = i1 >= p1 && i0 == 0.0 && p0 == 0.0;
    return {ok, "p=1 mean dPPL indep " + num(i1) + "% vs path " + num(p1) + "%; p=0 indep " + num(i0) + "%, path " +
                    num(p0) + "%"};
}

Verdict restriction_criterion(Suite& s) {
    const auto& base = s.runs().at("path4_s1");
    const auto early = base.dir / ("ckpt_step" + std::to_string(base.config.train.early_step()) + ".pmlb");
    std::map<std::size_t, double> ppl;
    bool compliant = true;
    std::string detail;
    for (std::size_t k : {10, 100, 500}) {
        const auto dir = s.work() / ("restrict_k" + std::to_string(k));
        const auto done = dir / "done.json";
        nlohmann::json summary;
        if (env_flag("PATHMOE_ACCEPTANCE_REUSE") && fs::exists(done)) {
            summary = nlohmann::json::parse(slurp(done));
            if (summary.value("config_hash", "") != hex64(base.config.hash())) summary = nullptr;
        }
        if (summary.is_null() || summary.empty()) {
            const auto out = restrict_and_train(early.string(), s.corpus(), k, dir.string(), true);
            summary = {{"config_hash", hex64(base.config.hash())},
                       {"ppl", out.run.final_eval_ppl},
                       {"compliance", out.run.compliance},
                       {"kept", out.paths.trie.path_count()},
                       {"observed", out.paths.observed}};
            std::ofstream(done) << summary.dump() << "\n";
        }
        ppl[k] = summary.at("ppl").get<double>();
        compliant = compliant && summary.at("compliance").get<double>() == 1.0;
        detail += "K=" + std::to_string(k) + " " + num(ppl[k]) + " (compliance " +
                  num(summary.at("compliance").get<double>()) + ", " +
                  std::to_string(summary.at("kept").get<std::size_t>()) + " of " +
                  std::to_string(summary.at("observed").get<std::size_t>()) + " paths); ";
    }
    const double unres = base.eval_ppl;
    const bool order = ppl[10] >= ppl[100] && ppl[100] >= ppl[500];
    const bool near = std::abs(ppl[500] - unres) / unres <= 0.05;
    return {order && near && compliant, detail + "unrestricted " + num(unres) + " (early checkpoint step " +
                                            std::to_string(base.config.train.early_step()) + ")"};
}

Verdict perplexity_criterion(Suite& s) {
    std::size_t wins = 0;
    std::string detail;
    bool seed1 = false;
    for (std::uint64_t seed : {1, 2, 3}) {
        const double pi = s.runs().at("indep_s" + std::to_string(seed)).eval_ppl;
        const double pp = s.runs().at("path4_s" + std::to_string(seed)).eval_ppl;
        if (seed == 1) seed1 = pp <= 1.01 * pi;
        wins += pp <= pi ? 1 : 0;
        detail += "seed " + std::to_string(seed) + ": path " + num(pp) + " vs indep " + num(pi) + "; ";
    }
    return {seed1 && wins >= 2, detail + "path <= indep on " + std::to_string(wins) + "/3 seeds"};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work");
    const char* env = std::getenv("PATHMOE_ACCEPTANCE_PROFILE");
    Profile profile;
    try {
        profile = make_profile(env ? env : "ci");
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    std::cout << "pathmoe acceptance, profile " << profile.name << " (d=" << profile.model.d_model
              << ", seq=" << profile.model.seq_len << ", batch=" << profile.train.batch
              << ", steps=" << profile.train.steps << ")\n"
              << std::flush;
    Suite s(profile, work);

    emit(1, "gradient suite", gradient_criterion);
    emit(2, "brute-force oracle equivalence", oracle_criterion);
    emit(11, "load-balancing closed forms", closed_form_criterion);
    emit(10, "determinism", [&] { return determinism_criterion(work, s.corpus()); });

    const auto t0 = Clock::now();
    bool trained = true;
    try {
        for (std::uint64_t seed : {1, 2, 3}) {
            s.run("indep_s" + std::to_string(seed), s.config(StrategyKind::Independent, 1, 0.01, seed));
            s.run("path4_s" + std::to_string(seed), s.config(StrategyKind::PathShared, 4, 0.01, seed));
        }
        for (std::uint64_t seed : {1, 2}) {
            s.run("path2_s" + std::to_string(seed), s.config(StrategyKind::PathShared, 2, 0.01, seed));
        }
        s.run("path4_a0_s1", s.config(StrategyKind::PathShared, 4, 0.0, 1));
    } catch (const std::exception& e) {
        std::cerr << "training failed: " << e.what() << "\n";
        trained = false;
    }
    std::cerr << "  training runs: " << num(std::chrono::duration<double>(Clock::now() - t0).count()) << " s\n";
    auto guarded = [&](int id, const std::string& name, Verdict (*fn)(Suite&)) {
        emit(id, name, [&]() -> Verdict {
            if (!trained) return {false, "training runs did not complete"};
            return fn(s);
        });
    };
    guarded(3, "information inequalities", [](Suite& x) { return inequality_criterion(x); });
    guarded(4, "routing entropy: path-shared below independent", entropy_criterion);
    guarded(5, "path consistency: path-shared ahead by 10 pp at every window", consistency_criterion);
    guarded(6, "load balance without auxiliary loss", load_balance_criterion);
    guarded(7, "robustness to expert permutation", robustness_criterion);
    guarded(8, "path restriction ordering", restriction_criterion);
    guarded(9, "perplexity: path-shared within 1% of independent", perplexity_criterion);

    report["profile"] = profile.name;
    std::ofstream(work / "acceptance_report.json") << report.dump(1) << "\n";
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << "\n";
    return failures == 0 ? 0 : 1;
}
