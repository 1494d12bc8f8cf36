// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against the OpenMP versions.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pathmoe/kernels/parallel.hpp"
#include "pathmoe/kernels/reference.hpp"

namespace {

std::vector<float> filled(std::size_t n, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (float& x : v) x = dist(gen);
    return v;
}

template <bool Par>
void BM_MatmulNN(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = filled(n * n, 1), b = filled(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        if constexpr (Par) {
            pathmoe::kernels::par::matmul_nn<float>(a, b, c, n, n, n, false);
        } else {
            pathmoe::kernels::ref::matmul_nn<float>(a, b, c, n, n, n, false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

template <bool Par>
void BM_MatmulTN(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = filled(n * n, 1), b = filled(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        if constexpr (Par) {
            pathmoe::kernels::par::matmul_tn<float>(a, b, c, n, n, n, false);
        } else {
            pathmoe::kernels::ref::matmul_tn<float>(a, b, c, n, n, n, false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

template <bool Par>
void BM_Attention(benchmark::State& state) {
    pathmoe::kernels::AttentionDims dims{8, static_cast<std::size_t>(state.range(0)), 4, 32};
    const std::size_t width = dims.heads * dims.head_dim;
    const std::size_t rows = dims.batch * dims.seq;
    const auto q = filled(rows * width, 1), k = filled(rows * width, 2), v = filled(rows * width, 3);
    std::vector<float> out(rows * width), probs(dims.batch * dims.heads * dims.seq * dims.seq);
    for (auto _ : state) {
        if constexpr (Par) {
            pathmoe::kernels::par::causal_attention<float>(q, k, v, out, probs, dims);
        } else {
            pathmoe::kernels::ref::causal_attention<float>(q, k, v, out, probs, dims);
        }
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(BM_MatmulNN<false>)->Arg(128)->Arg(256);
BENCHMARK(BM_MatmulNN<true>)->Arg(128)->Arg(256);
BENCHMARK(BM_MatmulTN<false>)->Arg(128)->Arg(256);
BENCHMARK(BM_MatmulTN<true>)->Arg(128)->Arg(256);
BENCHMARK(BM_Attention<false>)->Arg(64)->Arg(128);
BENCHMARK(BM_Attention<true>)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
