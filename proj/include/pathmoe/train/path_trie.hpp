// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pathmoe {

/// Prefix tree over expert paths of a fixed length. Node 0 is the root
/// (depth 0); a node at depth l lists the experts allowed at layer l.
class PathTrie {
public:
    PathTrie() = default;
    PathTrie(std::size_t layers, std::size_t experts);

    std::size_t layers() const { return layers_; }
    std::size_t experts() const { return experts_; }
    std::size_t path_count() const { return paths_; }
    std::size_t node_count() const { return children_.size() / (experts_ ? experts_ : 1); }

    /// Adds a path of exactly layers() expert ids; duplicates are ignored.
    void insert(std::span<const std::uint32_t> path);
    bool contains(std::span<const std::uint32_t> path) const;

    static constexpr std::int32_t kNone = -1;
    std::int32_t child(std::size_t node, std::uint32_t expert) const {
        return children_[node * experts_ + expert];
    }
    /// mask[e] = 1 when expert e continues some stored path from `node`.
    void allowed(std::size_t node, std::span<std::uint8_t> mask) const;

private:
    std::size_t layers_ = 0, experts_ = 0, paths_ = 0;
    std::vector<std::int32_t> children_;
};

}  // namespace pathmoe
