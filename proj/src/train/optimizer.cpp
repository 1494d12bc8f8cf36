// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/train/optimizer.hpp"

#include <cmath>

namespace pathmoe {

AdamW::AdamW(std::vector<Parameter<float>*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
        m_.emplace_back(p->numel(), 0.0f);
        v_.emplace_back(p->numel(), 0.0f);
    }
}

double AdamW::step(double lr) {
    double sq = 0;
    for (auto* p : params_) {
        if (!p->trainable) continue;
        for (float g : p->grad) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("optimizer: non-finite gradient norm");
    const double clip = (config_.clip_norm > 0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto* p = params_[pi];
        if (!p->trainable) continue;
        const bool decay = p->shape.size() >= 2 && config_.weight_decay > 0;
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < p->numel(); ++i) {
            const float g = static_cast<float>(p->grad[i] * clip);
            m[i] = b1 * m[i] + (1.0f - b1) * g;
            v[i] = b2 * v[i] + (1.0f - b2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            double update = mhat / (std::sqrt(vhat) + config_.eps);
            if (decay) update += config_.weight_decay * p->value[i];
            p->value[i] = static_cast<float>(p->value[i] - lr * update);
        }
    }
    return norm;
}

void AdamW::export_state(std::vector<NamedArray>& out) const {
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        out.push_back({"adam.m." + params_[pi]->name, params_[pi]->shape, m_[pi]});
        out.push_back({"adam.v." + params_[pi]->name, params_[pi]->shape, v_[pi]});
    }
}

void AdamW::import_state(const Checkpoint& ckpt, std::uint64_t steps_taken) {
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        for (auto [prefix, dst] : {std::pair{"adam.m.", &m_[pi]}, std::pair{"adam.v.", &v_[pi]}}) {
            const std::string name = prefix + params_[pi]->name;
            const NamedArray* a = ckpt.find(name);
            if (!a) throw DataError("checkpoint: missing optimizer array '" + name + "'");
            if (a->data.size() != dst->size()) throw DataError("checkpoint: optimizer array '" + name + "' has wrong size");
            *dst = a->data;
        }
    }
    t_ = steps_taken;
}

}  // namespace pathmoe
