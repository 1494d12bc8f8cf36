// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unordered_map>

#include "pathmoe/tensor/tensor.hpp"

namespace pathmoe {

/// Binds each Parameter to a tape at most once per forward pass.
template <typename T>
class ParamBinder {
public:
    explicit ParamBinder(Tape<T>& tape) : tape_(tape) {}

    Tape<T>& tape() { return tape_; }

    Var<T> operator()(Parameter<T>& p) {
        auto it = bound_.find(&p);
        if (it != bound_.end()) return it->second;
        Var<T> v = tape_.parameter(p);
        bound_.emplace(&p, v);
        return v;
    }

private:
    Tape<T>& tape_;
    std::unordered_map<const Parameter<T>*, Var<T>> bound_;
};

}  // namespace pathmoe
