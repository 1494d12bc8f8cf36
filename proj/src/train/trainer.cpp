// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pathmoe/tensor/ops.hpp"
#include "pathmoe/train/path_trie.hpp"

namespace pathmoe {

namespace {

template <typename V>
void take(const nlohmann::json& j, const char* key, V& out, const std::string& scope) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception&) {
        throw UsageError(scope + "." + key + ": wrong type");
    }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& scope) {
    if (!j.is_object()) throw UsageError(scope + ": expected an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : keys) known = known || item.key() == k;
        if (!known) throw UsageError(scope + "." + item.key() + ": unknown field");
    }
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

void TrainConfig::validate() const {
    if (steps < 1) throw UsageError("train.steps: must be positive");
    if (batch < 1) throw UsageError("train.batch: must be positive");
    if (!(peak_lr > 0)) throw UsageError("train.peak_lr: must be positive");
    if (!(min_lr_ratio >= 0 && min_lr_ratio <= 1)) throw UsageError("train.min_lr_ratio: must lie in [0, 1]");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1)) throw UsageError("train.beta1: must lie in [0, 1)");
    if (!(adam.beta2 >= 0 && adam.beta2 < 1)) throw UsageError("train.beta2: must lie in [0, 1)");
    if (!(adam.weight_decay >= 0)) throw UsageError("train.weight_decay: must be nonnegative");
    if (!(adam.clip_norm >= 0)) throw UsageError("train.clip_norm: must be nonnegative");
    if (!(val_fraction > 0 && val_fraction < 1)) throw UsageError("train.val_fraction: must lie in (0, 1)");
    if (eval_every < 1) throw UsageError("train.eval_every: must be positive");
    if (eval_tokens < 2) throw UsageError("train.eval_tokens: must be at least 2");
    if (eval_batch < 1) throw UsageError("train.eval_batch: must be positive");
    if (!(early_fraction > 0 && early_fraction <= 1)) throw UsageError("train.early_fraction: must lie in (0, 1]");
}

std::size_t TrainConfig::early_step() const {
    const auto s = static_cast<std::size_t>(std::llround(early_fraction * static_cast<double>(steps)));
    return std::clamp<std::size_t>(s, 1, steps);
}

void RunConfig::validate(bool need_paths) const {
    model.validate();
    train.validate();
    if (need_paths) {
        if (corpus.empty()) throw UsageError("corpus: missing path");
        if (out_dir.empty()) throw UsageError("out: missing output directory");
    }
}

nlohmann::json to_json(const TrainConfig& t) {
    return {{"steps", t.steps},
            {"batch", t.batch},
            {"warmup", t.warmup},
            {"peak_lr", t.peak_lr},
            {"min_lr_ratio", t.min_lr_ratio},
            {"beta1", t.adam.beta1},
            {"beta2", t.adam.beta2},
            {"adam_eps", t.adam.eps},
            {"weight_decay", t.adam.weight_decay},
            {"clip_norm", t.adam.clip_norm},
            {"val_fraction", t.val_fraction},
            {"eval_every", t.eval_every},
            {"eval_tokens", t.eval_tokens},
            {"eval_batch", t.eval_batch},
            {"checkpoint_every", t.checkpoint_every},
            {"early_fraction", t.early_fraction},
            {"record_throughput", t.record_throughput}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t) {
    const std::string s = "train";
    reject_unknown(j, {"steps", "batch", "warmup", "peak_lr", "min_lr_ratio", "beta1", "beta2", "adam_eps",
                       "weight_decay", "clip_norm", "val_fraction", "eval_every", "eval_tokens", "eval_batch",
                       "checkpoint_every", "early_fraction", "record_throughput"}, s);
    take(j, "steps", t.steps, s);
    take(j, "batch", t.batch, s);
    take(j, "warmup", t.warmup, s);
    take(j, "peak_lr", t.peak_lr, s);
    take(j, "min_lr_ratio", t.min_lr_ratio, s);
    take(j, "beta1", t.adam.beta1, s);
    take(j, "beta2", t.adam.beta2, s);
    take(j, "adam_eps", t.adam.eps, s);
    take(j, "weight_decay", t.adam.weight_decay, s);
    take(j, "clip_norm", t.adam.clip_norm, s);
    take(j, "val_fraction", t.val_fraction, s);
    take(j, "eval_every", t.eval_every, s);
    take(j, "eval_tokens", t.eval_tokens, s);
    take(j, "eval_batch", t.eval_batch, s);
    take(j, "checkpoint_every", t.checkpoint_every, s);
    take(j, "early_fraction", t.early_fraction, s);
    take(j, "record_throughput", t.record_throughput, s);
    return t;
}

nlohmann::json to_json(const RunConfig& r) {
    return {{"model", to_json(r.model)}, {"train", to_json(r.train)}, {"seed", r.seed}};
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig r) {
    reject_unknown(j, {"model", "train", "seed", "corpus", "out"}, "config");
    if (j.contains("model")) r.model = model_config_from_json(j.at("model"), r.model);
    if (j.contains("train")) r.train = train_config_from_json(j.at("train"), r.train);
    take(j, "seed", r.seed, "config");
    take(j, "corpus", r.corpus, "config");
    take(j, "out", r.out_dir, "config");
    return r;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_json(*this).dump()); }

std::string metric_header(const RunConfig& run) {
    std::string h = "# pathmoe-metrics v1 config_hash=" + hex64(run.hash()) + "\n";
    h += "step,lr,ce_nats,aux_loss,ppl,tokens_per_sec";
    for (std::size_t l = 1; l <= run.model.layers; ++l) h += ",max_load_ratio_layer" + std::to_string(l);
    return h + "\n";
}

std::string format_metric_row(const MetricRow& r) {
    std::string s = std::to_string(r.step) + "," + num(r.lr) + "," + num(r.ce) + "," + num(r.aux) + "," +
                    num(r.ppl) + "," + num(r.tokens_per_sec);
    for (double v : r.max_load_ratio) s += "," + num(v);
    return s + "\n";
}

void save_training_checkpoint(const std::string& path, const RunConfig& run, std::size_t step, Model<float>& model,
                              const AdamW* optimizer) {
    Checkpoint ckpt;
    nlohmann::json meta = to_json(run);
    meta["step"] = step;
    ckpt.config_text = meta.dump();
    ckpt.arrays = model.export_arrays();
    if (optimizer) optimizer->export_state(ckpt.arrays);
    write_checkpoint(path, ckpt);
}

LoadedModel load_model(const std::string& path) {
    LoadedModel out;
    out.checkpoint = read_checkpoint(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(out.checkpoint.config_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": unreadable checkpoint config: " + e.what());
    }
    if (!meta.is_object() || !meta.contains("step")) throw DataError(path + ": checkpoint config lacks a step");
    out.step = meta.at("step").get<std::size_t>();
    meta.erase("step");
    out.run = run_config_from_json(meta);
    out.run.validate(false);
    out.model = std::make_unique<Model<float>>(out.run.model, out.run.seed);
    out.model->import_arrays(out.checkpoint);
    return out;
}

TrainOutcome train(const RunConfig& run, const Corpus& corpus, const TrainHooks& hooks) {
    run.validate(false);
    if (run.out_dir.empty()) throw UsageError("out: missing output directory");
    const auto& mc = run.model;
    const auto& tc = run.train;
    std::filesystem::create_directories(run.out_dir);
    const std::filesystem::path out_dir(run.out_dir);

    std::unique_ptr<Model<float>> model;
    std::size_t start = 0;
    LoadedModel resumed;
    if (!hooks.resume_from.empty()) {
        resumed = load_model(hooks.resume_from);
        if (resumed.run.hash() != run.hash()) {
            throw UsageError("resume: checkpoint was written by a different configuration");
        }
        model = std::move(resumed.model);
        start = resumed.step;
    } else {
        model = std::make_unique<Model<float>>(mc, run.seed);
    }
    AdamW opt(model->parameters(), tc.adam);
    if (!hooks.resume_from.empty()) opt.import_state(resumed.checkpoint, start);

    const std::size_t seq = mc.seq_len;
    std::vector<std::int32_t> probe_in, probe_tg;
    sample_batch(corpus.train, tc.batch, seq, run.seed, 0, probe_in, probe_tg);  // size check up front
    const std::size_t eval_n = std::min(tc.eval_tokens, corpus.val.size());
    if (eval_n < 2) throw DataError("corpus: held-out split has fewer than two tokens");
    const std::span<const std::int32_t> eval_stream(corpus.val.data(), eval_n);

    TrainOutcome outcome;
    outcome.metrics_path = (out_dir / (hooks.metrics_name + ".csv")).string();
    outcome.eval_path = (out_dir / (hooks.eval_name + ".csv")).string();
    std::ofstream metrics(outcome.metrics_path, std::ios::trunc);
    std::ofstream evals(outcome.eval_path, std::ios::trunc);
    if (!metrics || !evals) throw DataError(run.out_dir + ": cannot write metric files");
    metrics << metric_header(run);
    evals << "# pathmoe-eval v1 config_hash=" << hex64(run.hash()) << "\nstep,eval_ce_nats,eval_ppl\n";

    ForwardOptions fwd_opts;
    fwd_opts.restriction = hooks.restriction;
    fwd_opts.need_aux = mc.alpha > 0;
    const Schedule sched = tc.schedule();
    const auto params = model->parameters();
    std::size_t compliant = 0, routed = 0;

    auto evaluate = [&](std::size_t step) {
        ForwardOptions eo;
        eo.restriction = hooks.restriction;
        const double ppl = perplexity(*model, eval_stream, tc.eval_batch, eo);
        outcome.evals.push_back({step, std::log(ppl), ppl});
        evals << step << "," << num(std::log(ppl)) << "," << num(ppl) << "\n";
        evals.flush();
        outcome.final_eval_ppl = ppl;
        if (!hooks.quiet) std::cerr << "step " << step << " eval_ppl " << num(ppl) << "\n";
    };
    auto checkpoint = [&](std::size_t step, const std::string& name) {
        const auto path = (out_dir / name).string();
        save_training_checkpoint(path, run, step, *model, &opt);
        return path;
    };

    std::vector<std::int32_t> in, tg;
    double window_tokens = 0, window_seconds = 0;
    for (std::size_t s = start; s < tc.steps; ++s) {
        const auto t0 = std::chrono::steady_clock::now();
        sample_batch(corpus.train, tc.batch, seq, run.seed, s, in, tg);
        for (auto* p : params) p->zero_grad();
        Tape<float> tape;
        auto fwd = model->forward(tape, in, tc.batch, seq, fwd_opts);
        auto loss = total_loss(fwd, tg, mc.alpha);
        if (!std::isfinite(loss.ce) || !std::isfinite(loss.aux)) {
            throw NumericError("non-finite loss at step " + std::to_string(s + 1));
        }
        tape.backward(loss.total);
        const double lr = lr_at(sched, s + 1);
        opt.step(lr);
        model->router().clamp_temperature();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        MetricRow row;
        row.step = s + 1;
        row.lr = lr;
        row.ce = loss.ce;
        row.aux = loss.aux;
        row.ppl = std::exp(loss.ce);
        const double tps = static_cast<double>(in.size()) / std::max(secs, 1e-9);
        row.tokens_per_sec = tc.record_throughput ? tps : 0.0;
        for (const auto& lr_routing : fwd.routing) row.max_load_ratio.push_back(max_load_ratio(lr_routing));
        if (hooks.restriction) {
            std::vector<std::uint32_t> path(mc.layers);
            for (std::size_t r = 0; r < in.size(); ++r) {
                for (std::size_t l = 0; l < mc.layers; ++l) path[l] = fwd.routing[l].top1(r);
                compliant += hooks.restriction->contains(path) ? 1 : 0;
                ++routed;
            }
        }
        metrics << format_metric_row(row);
        outcome.rows.push_back(std::move(row));

        window_tokens += static_cast<double>(in.size());
        window_seconds += secs;
        const std::size_t step = s + 1;
        if (!hooks.quiet && (step % 100 == 0 || step == tc.steps)) {
            std::cerr << "step " << step << " ce " << num(loss.ce) << " lr " << num(lr) << " tokens/sec "
                      << num(window_tokens / std::max(window_seconds, 1e-9)) << "\n";
            window_tokens = window_seconds = 0;
        }
        if (step % tc.eval_every == 0 && step != tc.steps) evaluate(step);
        if (step == tc.early_step() && hooks.resume_from.empty()) {
            outcome.early_checkpoint = checkpoint(step, "ckpt_step" + std::to_string(step) + ".pmlb");
        }
        if (tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0 && step != tc.steps) {
            checkpoint(step, "ckpt_step" + std::to_string(step) + ".pmlb");
        }
    }
    metrics.flush();
    evaluate(tc.steps);
    outcome.final_checkpoint = checkpoint(tc.steps, "final.pmlb");
    outcome.compliance = routed ? static_cast<double>(compliant) / static_cast<double>(routed) : 1.0;
    return outcome;
}

}  // namespace pathmoe
