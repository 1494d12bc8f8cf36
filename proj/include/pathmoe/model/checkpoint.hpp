// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary layout, all integers little-endian:
//   "PMLB" | u32 version | u32 n | n bytes of JSON config text |
//   repeated until EOF: u32 n | name | u8 dtype (0 = f32) | u32 rank |
//                       rank x u64 extent | numel x f32

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathmoe/common.hpp"

namespace pathmoe {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string config_text;
    std::vector<NamedArray> arrays;

    /// nullptr when absent.
    const NamedArray* find(const std::string& name) const;
};

/// Throws DataError on I/O failure.
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws DataError on bad magic, unsupported version or truncation.
Checkpoint read_checkpoint(const std::string& path);

}  // namespace pathmoe
