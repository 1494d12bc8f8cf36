// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pathmoe/model/config.hpp"
#include "pathmoe/model/model.hpp"
#include "pathmoe/train/corpus.hpp"
#include "pathmoe/train/optimizer.hpp"
#include "pathmoe/train/schedule.hpp"

namespace pathmoe {

class PathTrie;

struct TrainConfig {
    std::size_t steps = 3000;
    std::size_t batch = 32;
    std::size_t warmup = 100;
    double peak_lr = 3e-4;
    double min_lr_ratio = 0.1;
    AdamWConfig adam;
    double val_fraction = 0.05;
    std::size_t eval_every = 500;
    /// Leading tokens of the held-out split used for evaluation.
    std::size_t eval_tokens = 16384;
    std::size_t eval_batch = 16;
    /// 0 writes only the early and final checkpoints.
    std::size_t checkpoint_every = 0;
    /// Early checkpoint at round(early_fraction * steps), at least step 1.
    double early_fraction = 0.0125;
    /// Write measured tokens/sec into the metrics CSV. Off by default so that
    /// repeated runs produce byte-identical files; the rate goes to stderr.
    bool record_throughput = false;

    void validate() const;
    Schedule schedule() const { return {peak_lr, warmup, steps, min_lr_ratio}; }
    std::size_t early_step() const;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::uint64_t seed = 1;
    std::string corpus;
    std::string out_dir;

    /// Validates every cross-field constraint; paths are checked only when
    /// `need_paths` is set.
    void validate(bool need_paths = true) const;
    /// Hash over model, train and seed (paths excluded).
    std::uint64_t hash() const;
};

nlohmann::json to_json(const TrainConfig& t);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
/// Settings only (no paths).
nlohmann::json to_json(const RunConfig& r);
/// Accepts {"model": {...}, "train": {...}, "seed": n, "corpus": "...", "out": "..."}.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

struct MetricRow {
    std::size_t step = 0;
    double lr = 0, ce = 0, aux = 0, ppl = 0, tokens_per_sec = 0;
    std::vector<double> max_load_ratio;
};

struct EvalRow {
    std::size_t step = 0;
    double ce = 0, ppl = 0;
};

struct TrainHooks {
    const PathTrie* restriction = nullptr;
    /// Continue from this checkpoint (model, optimizer moments and step).
    std::string resume_from;
    /// File-name stem for outputs, e.g. "metrics" -> metrics.csv.
    std::string metrics_name = "metrics";
    std::string eval_name = "eval";
    bool quiet = false;
};

struct TrainOutcome {
    std::vector<MetricRow> rows;
    std::vector<EvalRow> evals;
    double final_eval_ppl = 0;
    /// Fraction of training tokens whose top-1 path lies in the trie (1.0
    /// when unrestricted).
    double compliance = 1.0;
    std::string metrics_path, eval_path, early_checkpoint, final_checkpoint;
};

/// Trains, writing <out>/metrics.csv, <out>/eval.csv, <out>/ckpt_step<N>.pmlb
/// and <out>/final.pmlb.
TrainOutcome train(const RunConfig& run, const Corpus& corpus, const TrainHooks& hooks = {});

struct LoadedModel {
    RunConfig run;
    std::size_t step = 0;
    std::unique_ptr<Model<float>> model;
    Checkpoint checkpoint;
};

void save_training_checkpoint(const std::string& path, const RunConfig& run, std::size_t step, Model<float>& model,
                              const AdamW* optimizer);
LoadedModel load_model(const std::string& path);

std::string metric_header(const RunConfig& run);
std::string format_metric_row(const MetricRow& row);

}  // namespace pathmoe
