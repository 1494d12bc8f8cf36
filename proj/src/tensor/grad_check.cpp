// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pathmoe {

namespace {

void require_step(double eps) {
    if (!(eps >= 1e-6 && eps <= 1e-3)) {
        throw UsageError("grad_check: eps " + std::to_string(eps) + " outside [1e-6, 1e-3]");
    }
}

double checked(double v, const char* where) {
    if (!std::isfinite(v)) throw NumericError(std::string("grad_check: non-finite value at ") + where);
    return v;
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

}  // namespace

double grad_check(const ScalarOfInput& f, const Shape& shape, std::span<const double> x, double eps) {
    require_step(eps);
    std::vector<double> point(x.begin(), x.end());

    std::vector<double> analytic;
    {
        Tape<double> tape;
        auto in = tape.leaf(shape, point, true);
        auto out = f(tape, in);
        checked(out.item(), "x");
        tape.backward(out);
        analytic.assign(in.grad().begin(), in.grad().end());
    }

    auto eval = [&](const std::vector<double>& at) {
        Tape<double> tape;
        tape.set_grad_enabled(false);
        auto in = tape.leaf(shape, at, false);
        return checked(f(tape, in).item(), "x +/- eps");
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + eps;
        const double up = eval(point);
        point[i] = saved - eps;
        const double down = eval(point);
        point[i] = saved;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
    }
    return worst;
}

double grad_check_parameters(const ScalarOfParameters& loss,
                             std::span<Parameter<double>* const> params, double eps) {
    require_step(eps);
    for (auto* p : params) p->zero_grad();
    {
        Tape<double> tape;
        auto out = loss(tape);
        checked(out.item(), "parameters");
        tape.backward(out);
    }
    std::vector<std::vector<double>> analytic;
    for (auto* p : params) analytic.push_back(p->grad);

    auto eval = [&] {
        Tape<double> tape;
        tape.set_grad_enabled(false);
        return checked(loss(tape).item(), "parameters +/- eps");
    };

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& value = params[pi]->value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + eps;
            const double up = eval();
            value[i] = saved - eps;
            const double down = eval();
            value[i] = saved;
            worst = std::max(worst, relative_error(analytic[pi][i], (up - down) / (2.0 * eps)));
        }
    }
    for (auto* p : params) p->zero_grad();
    return worst;
}

}  // namespace pathmoe
