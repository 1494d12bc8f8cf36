// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/train/path_trie.hpp"

#include <string>

#include "pathmoe/common.hpp"

namespace pathmoe {

PathTrie::PathTrie(std::size_t layers, std::size_t experts)
    : layers_(layers), experts_(experts), children_(experts, kNone) {
    if (layers < 1 || experts < 1) throw UsageError("PathTrie: layers and experts must be positive");
}

void PathTrie::insert(std::span<const std::uint32_t> path) {
    if (path.size() != layers_) {
        throw UsageError("PathTrie: path of length " + std::to_string(path.size()) + ", expected " +
                         std::to_string(layers_));
    }
    std::size_t node = 0;
    bool added = false;
    for (std::uint32_t e : path) {
        if (e >= experts_) throw UsageError("PathTrie: expert " + std::to_string(e) + " out of range");
        std::int32_t next = children_[node * experts_ + e];
        if (next == kNone) {
            next = static_cast<std::int32_t>(node_count());
            children_[node * experts_ + e] = next;
            children_.resize(children_.size() + experts_, kNone);
            added = true;
        }
        node = static_cast<std::size_t>(next);
    }
    if (added) ++paths_;
}

bool PathTrie::contains(std::span<const std::uint32_t> path) const {
    if (path.size() != layers_ || children_.empty()) return false;
    std::size_t node = 0;
    for (std::uint32_t e : path) {
        if (e >= experts_) return false;
        const std::int32_t next = child(node, e);
        if (next == kNone) return false;
        node = static_cast<std::size_t>(next);
    }
    return true;
}

void PathTrie::allowed(std::size_t node, std::span<std::uint8_t> mask) const {
    for (std::size_t e = 0; e < experts_; ++e) mask[e] = child(node, static_cast<std::uint32_t>(e)) != kNone;
}

}  // namespace pathmoe
