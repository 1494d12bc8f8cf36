// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pathmoe/tensor/tensor.hpp"

namespace pathmoe {

using ScalarOfInput = std::function<Var<double>(Tape<double>&, Var<double>)>;
using ScalarOfParameters = std::function<Var<double>(Tape<double>&)>;

/// Compares the tape gradient of f at x against central differences with step
/// eps and returns max_i |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
/// eps must lie in [1e-6, 1e-3]; a non-finite f at any perturbed point throws.
double grad_check(const ScalarOfInput& f, const Shape& shape, std::span<const double> x, double eps);

/// Same measure over every element of the given parameters; `loss` binds them
/// through Tape::parameter.
double grad_check_parameters(const ScalarOfParameters& loss,
                             std::span<Parameter<double>* const> params, double eps);

}  // namespace pathmoe
