// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// pathmoe: train, trace, analyze, restrict, grad-check, make-corpus.
// Exit codes: 0 success, 1 usage, 2 data/IO, 3 numerical failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pathmoe/analysis/categories.hpp"
#include "pathmoe/analysis/metrics.hpp"
#include "pathmoe/analysis/trace.hpp"
#include "pathmoe/kernels/types.hpp"
#include "pathmoe/model/gradient_suite.hpp"
#include "pathmoe/train/restrict.hpp"
#include "pathmoe/train/trainer.hpp"

using namespace pathmoe;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "pathmoe 0.1.0";

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Output sink: a file when --out is given, stdout otherwise.
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (!path.empty()) {
            if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
            file_.open(path, std::ios::trunc);
            if (!file_) throw DataError(path + ": cannot write");
        }
    }
    std::ostream& out() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

struct TrainFlags {
    std::string config, corpus, out, strategy;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> block_size, top_k, steps;
    std::optional<double> alpha;
};

void add_run_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--corpus", f.corpus, "Plain-text training corpus");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--seed", f.seed, "Run seed");
    cmd->add_option("--strategy", f.strategy, "indep, path, mono, lowrank, xmoe or rand");
    cmd->add_option("--block-size", f.block_size, "Layers per shared router");
    cmd->add_option("--top-k", f.top_k, "Experts per token");
    cmd->add_option("--alpha", f.alpha, "Load-balancing weight");
    cmd->add_option("--steps", f.steps, "Training steps");
}

// Config file first, then flags (flags win).
RunConfig resolve_run(const TrainFlags& f) {
    RunConfig run;
    if (!f.config.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(f.config));
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(f.config + ": " + e.what());
        }
        run = run_config_from_json(j);
        // relative paths in the file are taken from the file's directory
        const fs::path base = fs::path(f.config).parent_path();
        if (!run.corpus.empty() && fs::path(run.corpus).is_relative()) run.corpus = (base / run.corpus).string();
        if (!run.out_dir.empty() && fs::path(run.out_dir).is_relative()) run.out_dir = (base / run.out_dir).string();
    }
    if (!f.corpus.empty()) run.corpus = f.corpus;
    if (!f.out.empty()) run.out_dir = f.out;
    if (f.seed) run.seed = *f.seed;
    if (!f.strategy.empty()) run.model.strategy.kind = parse_strategy(f.strategy);
    if (f.block_size) run.model.strategy.block_size = *f.block_size;
    if (f.top_k) run.model.top_k = *f.top_k;
    if (f.alpha) run.model.alpha = *f.alpha;
    if (f.steps) run.train.steps = *f.steps;
    return run;
}

int cmd_train(const TrainFlags& f) {
    const RunConfig run = resolve_run(f);
    run.validate(true);
    const Corpus corpus = load_corpus(run.corpus, run.train.val_fraction);
    fs::create_directories(run.out_dir);
    nlohmann::json cfg = to_json(run);
    cfg["config_hash"] = hex64(run.hash());
    cfg["version"] = kVersion;
    std::ofstream(fs::path(run.out_dir) / "config.json") << cfg.dump(2) << "\n";
    const auto out = train(run, corpus);
    std::cout << "# " << kVersion << " train config_hash=" << hex64(run.hash()) << "\n"
              << "steps=" << run.train.steps << " final_train_ce=" << num(out.rows.back().ce)
              << " final_eval_ppl=" << num(out.final_eval_ppl) << "\n"
              << "metrics=" << out.metrics_path << "\n"
              << "eval=" << out.eval_path << "\n"
              << "early_checkpoint=" << out.early_checkpoint << "\n"
              << "final_checkpoint=" << out.final_checkpoint << "\n";
    return 0;
}

std::vector<std::int32_t> load_tokens(const std::string& path, std::size_t limit) {
    const auto text = read_file(path);
    if (text.empty()) throw DataError(path + ": empty data file");
    auto tokens = byte_tokens(text);
    if (limit > 0 && tokens.size() > limit) tokens.resize(limit);
    return tokens;
}

struct TraceFlags {
    std::string checkpoint, data, out;
    std::size_t tokens = 0, batch = 16;
};

int cmd_trace(const TraceFlags& f) {
    auto loaded = load_model(f.checkpoint);
    const auto tokens = load_tokens(f.data, f.tokens);
    const std::string hash = hex64(loaded.run.hash());
    const Trace trace = record_trace(*loaded.model, tokens, f.batch, {}, hash);
    const std::string out = f.out.empty() ? "trace.jsonl" : f.out;
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_trace(out, trace);
    const auto h = path_histogram(trace);
    std::cout << "# " << kVersion << " trace config_hash=" << hash << "\n"
              << "tokens=" << trace.tokens() << " unique_paths=" << h.counts.size() << " trace=" << out << "\n";
    return 0;
}

struct AnalyzeFlags {
    std::string metric, trace, out, checkpoint, data, windows, categories;
    std::size_t max_k = 0, paths = 10, top_tokens = 20, seeds = 5, batch = 16, tokens = 0;
    std::vector<std::size_t> min_runs;
    double p = 1.0;
};

// "a..b" or "a" or "a,b,c"
std::vector<std::size_t> parse_range(const std::string& text) {
    std::vector<std::size_t> out;
    try {
        const auto dots = text.find("..");
        if (dots != std::string::npos) {
            const std::size_t lo = std::stoul(text.substr(0, dots)), hi = std::stoul(text.substr(dots + 2));
            for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
        } else {
            std::stringstream ss(text);
            for (std::string part; std::getline(ss, part, ',');) out.push_back(std::stoul(part));
        }
    } catch (const std::exception&) {
        throw UsageError("--window: expected a..b or a comma list, got '" + text + "'");
    }
    if (out.empty()) throw UsageError("--window: empty range");
    return out;
}

std::string csv_header(const std::string& metric, const std::string& hash) {
    return "# pathmoe-analysis v1 metric=" + metric + " config_hash=" + hash + "\n";
}

nlohmann::json json_header(const std::string& metric, const std::string& hash) {
    return {{"format", "pathmoe-analysis"}, {"version", 1}, {"metric", metric}, {"config_hash", hash}};
}

int cmd_analyze(const AnalyzeFlags& f) {
    static const std::set<std::string> known{"entropy", "markov", "mi", "coverage", "align", "consistency",
                                             "engagement", "specialize", "robustness", "categories", "report"};
    if (!known.count(f.metric)) throw UsageError("analyze: unknown submetric '" + f.metric + "'");

    if (f.metric == "robustness") {
        if (f.checkpoint.empty() || f.data.empty()) throw UsageError("robustness: needs --checkpoint and --data");
        auto loaded = load_model(f.checkpoint);
        const auto tokens = load_tokens(f.data, f.tokens);
        Sink sink(f.out);
        auto& os = sink.out();
        os << csv_header("robustness", hex64(loaded.run.hash())) << "seed,p,base_ppl,perturbed_ppl,delta_percent\n";
        double mean = 0;
        for (std::size_t s = 1; s <= f.seeds; ++s) {
            const auto r = perturb_and_eval(*loaded.model, f.p, tokens, s, f.batch);
            os << s << "," << num(f.p) << "," << num(r.base_ppl) << "," << num(r.perturbed_ppl) << ","
               << num(r.delta_percent) << "\n";
            mean += r.delta_percent / static_cast<double>(f.seeds);
        }
        os << "mean," << num(f.p) << ",,," << num(mean) << "\n";
        return 0;
    }

    if (f.trace.empty()) throw UsageError("analyze: --trace is required");
    const Trace trace = read_trace(f.trace);
    const std::string& hash = trace.config_hash;
    Sink sink(f.out);
    auto& os = sink.out();
    const auto hist = path_histogram(trace);

    if (f.metric == "entropy") {
        const auto r = routing_entropy(hist);
        os << csv_header("entropy", hash) << "bits,effective_paths,unique_paths,tokens\n"
           << num(r.bits) << "," << num(r.effective_paths) << "," << r.unique_paths << "," << hist.total << "\n";
    } else if (f.metric == "markov") {
        const double bound = static_cast<double>(trace.layers) * std::log2(static_cast<double>(trace.experts));
        os << csv_header("markov", hash) << "markov_bits,routing_bits,upper_bound_bits\n"
           << num(markov_entropy(trace)) << "," << num(routing_entropy(hist).bits) << "," << num(bound) << "\n";
    } else if (f.metric == "mi") {
        os << csv_header("mi", hash) << "layer,mi_bits\n";
        for (std::size_t l = 2; l <= trace.layers; ++l) os << l << "," << num(adjacent_mi(trace, l)) << "\n";
    } else if (f.metric == "coverage") {
        const std::size_t top = f.max_k ? f.max_k : hist.counts.size();
        os << csv_header("coverage", hash) << "k,coverage\n";
        for (std::size_t k = 1; k <= top; ++k) os << k << "," << num(cumulative_coverage(hist, k)) << "\n";
    } else if (f.metric == "align") {
        const auto a = align_experts(trace);
        auto j = json_header("align", hash);
        j["labels"] = a.labels;
        j["agreement"] = adjacent_agreement(trace, a);
        j["agreement_unaligned"] = adjacent_agreement(trace, identity_alignment(trace.layers, trace.experts));
        os << j.dump(1) << "\n";
    } else if (f.metric == "consistency") {
        const auto a = align_experts(trace);
        const auto windows = f.windows.empty() ? parse_range("2.." + std::to_string(trace.layers)) : parse_range(f.windows);
        std::vector<double> values;
        for (std::size_t w : windows) values.push_back(path_consistency(trace, a, w));
        os << csv_header("consistency", hash) << "window,consistency\n";
        for (std::size_t i = 0; i < windows.size(); ++i) os << windows[i] << "," << num(values[i]) << "\n";
    } else if (f.metric == "engagement") {
        const auto a = align_experts(trace);
        std::vector<std::size_t> runs = f.min_runs;
        if (runs.empty())
            for (std::size_t x = 1; x <= trace.layers; ++x) runs.push_back(x);
        os << csv_header("engagement", hash) << "min_run,fraction\n";
        for (std::size_t x : runs) os << x << "," << num(sustained_engagement(trace, a, x)) << "\n";
    } else if (f.metric == "specialize") {
        const auto prof = token_entropy_profile(trace, align_experts(trace));
        os << csv_header("specialize", hash) << "layer,token_entropy_bits\n";
        for (std::size_t l = 0; l < prof.size(); ++l) os << l + 1 << "," << num(prof[l]) << "\n";
    } else if (f.metric == "categories") {
        const auto table = f.categories.empty() ? CategoryTable::bundled() : CategoryTable::load(f.categories);
        std::map<std::string, std::size_t> counts;
        for (const auto& c : categorize_tokens(table, trace.word)) ++counts[c];
        os << csv_header("categories", hash) << "category,count,fraction\n";
        for (const auto& name : table.names()) {
            const std::size_t c = counts.count(name) ? counts[name] : 0;
            os << name << "," << c << "," << num(static_cast<double>(c) / static_cast<double>(trace.tokens())) << "\n";
        }
    } else {  // report
        const auto table = f.categories.empty() ? CategoryTable::bundled() : CategoryTable::load(f.categories);
        const auto rep = path_token_report(trace, hist, table, f.paths, f.top_tokens);
        auto j = json_header("report", hash);
        j["mean_concentration"] = mean_concentration(rep);
        j["entries"] = nlohmann::json::array();
        for (const auto& e : rep) j["entries"].push_back(to_json(e));
        os << j.dump(1) << "\n";
    }
    return 0;
}

struct RestrictFlags {
    std::string checkpoint, corpus, out;
    std::size_t paths = 10;
};

int cmd_restrict(const RestrictFlags& f) {
    if (f.out.empty()) throw UsageError("restrict: --out is required");
    auto head = load_model(f.checkpoint);
    const Corpus corpus = load_corpus(f.corpus, head.run.train.val_fraction);
    const auto r = restrict_and_train(f.checkpoint, corpus, f.paths, f.out);
    if (r.paths.short_of_k) {
        std::cerr << "warning: only " << r.paths.observed << " distinct paths observed, fewer than K=" << f.paths
                  << "; keeping all of them\n";
    }
    nlohmann::json j{{"format", "pathmoe-restrict"},
                     {"version", 1},
                     {"config_hash", hex64(head.run.hash())},
                     {"k", f.paths},
                     {"observed_paths", r.paths.observed},
                     {"kept_paths", r.paths.trie.path_count()},
                     {"short_of_k", r.paths.short_of_k},
                     {"resumed_from_step", head.step},
                     {"compliance", r.run.compliance},
                     {"final_eval_ppl", r.run.final_eval_ppl}};
    nlohmann::json sel = nlohmann::json::array();
    for (const auto& [p, c] : r.paths.selected) sel.push_back({{"path", p}, {"count", c}});
    j["paths"] = sel;
    std::ofstream(fs::path(f.out) / "restrict.json") << j.dump(1) << "\n";
    std::cout << "# " << kVersion << " restrict config_hash=" << hex64(head.run.hash()) << "\n"
              << "k=" << f.paths << " kept_paths=" << r.paths.trie.path_count()
              << " short_of_k=" << (r.paths.short_of_k ? 1 : 0) << " compliance=" << num(r.run.compliance)
              << " final_eval_ppl=" << num(r.run.final_eval_ppl) << "\n";
    return 0;
}

int cmd_grad_check(std::uint64_t seed) {
    const auto suite = gradient_suite(seed);
    std::cout << "# " << kVersion << " grad-check eps=1e-05 tolerance=1e-04\ncheck,max_rel_error,status\n";
    bool ok = true;
    for (const auto& e : suite) {
        const bool pass = e.max_rel_error < 1e-4;
        ok = ok && pass;
        std::cout << e.name << "," << num(e.max_rel_error) << "," << (pass ? "ok" : "FAIL") << "\n";
    }
    return ok ? 0 : 3;
}

int cmd_make_corpus(std::size_t bytes, std::uint64_t seed, const std::string& out) {
    if (out.empty()) throw UsageError("make-corpus: --out is required");
    const auto text = synthetic_text(bytes, seed);
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError(out + ": cannot write");
    f << text;
    std::cout << "bytes=" << text.size() << " out=" << out << "\n";
    return 0;
}

void apply_thread_env() {
    if (const char* env = std::getenv("PATHMOE_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || n < 1) throw UsageError("PATHMOE_THREADS: expected a positive integer");
        kernels::set_worker_count(static_cast<int>(n));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixture-of-experts routing lab: train, trace and analyze expert paths"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    TrainFlags tf;
    auto* train_cmd = app.add_subcommand("train", "Train a model and write metrics and checkpoints");
    add_run_flags(train_cmd, tf);

    TraceFlags trf;
    auto* trace_cmd = app.add_subcommand("trace", "Record routing decisions of a checkpoint over a text file");
    trace_cmd->add_option("--checkpoint", trf.checkpoint, "Checkpoint (.pmlb)")->required();
    trace_cmd->add_option("--data", trf.data, "Plain-text file to trace")->required();
    trace_cmd->add_option("--out", trf.out, "Trace output (JSON lines)");
    trace_cmd->add_option("--tokens", trf.tokens, "Trace only the first N bytes (0 = all)");
    trace_cmd->add_option("--batch", trf.batch, "Windows per forward pass")->check(CLI::PositiveNumber);

    AnalyzeFlags af;
    auto* analyze_cmd = app.add_subcommand("analyze", "Compute a path metric from a trace");
    analyze_cmd->add_option("metric", af.metric,
                            "entropy, markov, mi, coverage, align, consistency, engagement, specialize, "
                            "robustness, categories or report")
        ->required();
    analyze_cmd->add_option("--trace", af.trace, "Trace file");
    analyze_cmd->add_option("--out", af.out, "Output file (default stdout)");
    analyze_cmd->add_option("--window", af.windows, "Window sizes for consistency, e.g. 2..8");
    analyze_cmd->add_option("--min-run", af.min_runs, "Run lengths for engagement");
    analyze_cmd->add_option("--max-k", af.max_k, "Largest K for coverage (default: all paths)");
    analyze_cmd->add_option("--paths", af.paths, "Paths in the report");
    analyze_cmd->add_option("--tokens", af.top_tokens, "Tokens per path in the report");
    analyze_cmd->add_option("--categories", af.categories, "Token category table (JSON)");
    analyze_cmd->add_option("--checkpoint", af.checkpoint, "Checkpoint for robustness");
    analyze_cmd->add_option("--data", af.data, "Evaluation text for robustness");
    analyze_cmd->add_option("--eval-tokens", af.tokens, "Evaluate only the first N bytes (0 = all)");
    analyze_cmd->add_option("--p", af.p, "Per-layer permutation probability")->check(CLI::Range(0.0, 1.0));
    analyze_cmd->add_option("--seeds", af.seeds, "Permutation seeds 1..n")->check(CLI::PositiveNumber);
    analyze_cmd->add_option("--batch", af.batch, "Windows per forward pass")->check(CLI::PositiveNumber);

    RestrictFlags rf;
    auto* restrict_cmd = app.add_subcommand("restrict", "Resume training with routing restricted to the top-K paths");
    restrict_cmd->add_option("--checkpoint", rf.checkpoint, "Early checkpoint")->required();
    restrict_cmd->add_option("--corpus", rf.corpus, "Training corpus")->required();
    restrict_cmd->add_option("--paths", rf.paths, "K, the number of paths kept")->check(CLI::PositiveNumber);
    restrict_cmd->add_option("--out", rf.out, "Output directory")->required();

    std::uint64_t gc_seed = 1;
    auto* gc_cmd = app.add_subcommand("grad-check", "Check every gradient against central differences");
    gc_cmd->add_option("--seed", gc_seed, "Seed for the random probes");

    std::size_t corpus_bytes = 1 << 20;
    std::uint64_t corpus_seed = 1;
    std::string corpus_out;
    auto* mc_cmd = app.add_subcommand("make-corpus", "Write a synthetic English-like text corpus");
    mc_cmd->add_option("--bytes", corpus_bytes, "Minimum size in bytes");
    mc_cmd->add_option("--seed", corpus_seed, "Generator seed");
    mc_cmd->add_option("--out", corpus_out, "Output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        apply_thread_env();
        if (*train_cmd) return cmd_train(tf);
        if (*trace_cmd) return cmd_trace(trf);
        if (*analyze_cmd) return cmd_analyze(af);
        if (*restrict_cmd) return cmd_restrict(rf);
        if (*gc_cmd) return cmd_grad_check(gc_seed);
        if (*mc_cmd) return cmd_make_corpus(corpus_bytes, corpus_seed, corpus_out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
