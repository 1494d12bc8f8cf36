// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pathmoe {

using Shape = std::vector<std::size_t>;

// Error categories map one-to-one onto CLI exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments, configuration or shapes (exit code 1).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Shape mismatch between kernel operands.
class ShapeError : public UsageError {
public:
    using UsageError::UsageError;
};

/// Missing files, malformed inputs, version mismatches (exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finite ones are required (exit code 3).
class NumericError : public Error {
public:
    using Error::Error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
bool all_finite(std::span<const T> values) {
    for (T v : values) {
        if (!(v - v == T(0))) return false;
    }
    return true;
}

/// mt19937_64 with explicit transforms, so draws do not depend on the standard
/// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();
    /// Normal(0, std) truncated to [-2 std, 2 std].
    double truncated_normal(double std);
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

/// 64-bit FNV-1a, used for config hashes.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace pathmoe
