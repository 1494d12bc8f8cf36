// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Explicit instantiation list shared by the ref:: and par:: kernel sets.

#pragma once

#define PATHMOE_INSTANTIATE(T)                                                                     \
    template void matmul_nn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, \
                               std::size_t, std::size_t, bool);                                   \
    template void matmul_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, \
                               std::size_t, std::size_t, bool);                                   \
    template void matmul_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, \
                               std::size_t, std::size_t, bool);                                   \
    template void softmax_rows<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);    \
    template void softmax_rows_backward<T>(std::span<const T>, std::span<const T>, std::span<T>,  \
                                           std::size_t, std::size_t);                             \
    template void layer_norm<T>(std::span<const T>, std::span<const T>, std::span<const T>,       \
                                std::span<T>, std::span<T>, std::span<T>, std::size_t,            \
                                std::size_t, T);                                                  \
    template void layer_norm_backward<T>(std::span<const T>, std::span<const T>,                  \
                                         std::span<const T>, std::span<const T>,                  \
                                         std::span<const T>, std::span<T>, std::span<T>,          \
                                         std::span<T>, std::size_t, std::size_t);                 \
    template void gelu<T>(std::span<const T>, std::span<T>);                                      \
    template void gelu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);         \
    template void causal_attention<T>(std::span<const T>, std::span<const T>, std::span<const T>, \
                                      std::span<T>, std::span<T>, const AttentionDims&);          \
    template void causal_attention_backward<T>(                                                   \
        std::span<const T>, std::span<const T>, std::span<const T>, std::span<const T>,           \
        std::span<const T>, std::span<T>, std::span<T>, std::span<T>, const AttentionDims&);      \
    template T cross_entropy<T>(std::span<const T>, std::span<const std::int32_t>, std::span<T>,  \
                                std::size_t, std::size_t);                                        \
    template void cross_entropy_backward<T>(std::span<const T>, std::span<const std::int32_t>,    \
                                            std::span<T>, std::size_t, std::size_t, T);
