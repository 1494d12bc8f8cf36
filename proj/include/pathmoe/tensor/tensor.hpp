// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode recording tape.
//
// A Tape owns every intermediate value produced during one forward pass. Ops
// append a record (inputs, output, backward rule) whenever any input requires
// a gradient; records are therefore topologically ordered by construction and
// backward() replays them once, in reverse.
//
// Parameters live outside the tape. Tape::parameter() binds a leaf to the
// parameter's storage so backward() accumulates straight into Parameter::grad.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pathmoe/common.hpp"

namespace pathmoe {

template <typename T>
struct Parameter {
    std::string name;
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    /// Frozen parameters are bound without requires_grad and never updated.
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Shape s)
        : name(std::move(n)), shape(std::move(s)), value(shape_numel(shape), T(0)),
          grad(shape_numel(shape), T(0)) {}

    std::size_t numel() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    bool valid() const { return tape_ != nullptr; }
    Tape<T>& tape() const { return *tape_; }
    std::uint32_t id() const { return id_; }

    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t dim(std::size_t axis) const { return shape().at(axis); }
    std::span<const T> data() const;
    /// Gradient after backward(); empty when the node was never reached.
    std::span<const T> grad() const;
    bool requires_grad() const;
    /// Value of a single-element node.
    T item() const;

private:
    Tape<T>* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::uint32_t output)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// When false, ops compute values but record nothing (inference).
    void set_grad_enabled(bool on) { grad_enabled_ = on; }
    bool grad_enabled() const { return grad_enabled_; }

    Var<T> leaf(Shape shape, std::vector<T> data, bool requires_grad = false);
    Var<T> constant(Shape shape, std::vector<T> data) { return leaf(std::move(shape), std::move(data), false); }
    Var<T> parameter(Parameter<T>& p);

    /// Appends an op output. `backward` is kept only if some input requires a
    /// gradient and recording is enabled.
    Var<T> record(Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs,
                  BackwardFn backward);

    /// Seeds d(loss)/d(loss) = 1 and replays the records in reverse. Leaves
    /// that require a gradient but were not reached get a zero-filled one.
    void backward(Var<T> loss);

    const Shape& shape(std::uint32_t id) const { return nodes_[id].shape; }
    std::span<const T> value(std::uint32_t id) const;
    bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
    /// Read-only gradient view; empty if not yet allocated.
    std::span<const T> grad(std::uint32_t id) const;
    /// Gradient buffer for accumulation inside backward rules; allocates zeros.
    std::span<T> grad_acc(std::uint32_t id);

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t record_count() const { return records_.size(); }

private:
    struct Node {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;
        const T* bound_value = nullptr;
        T* bound_grad = nullptr;
        std::size_t bound_size = 0;
        bool requires_grad = false;
        bool is_leaf = false;
    };
    struct Record {
        std::vector<std::uint32_t> inputs;
        std::uint32_t output = 0;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<Record> records_;
    bool grad_enabled_ = true;
};

template <typename T>
const Shape& Var<T>::shape() const { return tape_->shape(id_); }
template <typename T>
std::size_t Var<T>::numel() const { return shape_numel(shape()); }
template <typename T>
std::span<const T> Var<T>::data() const { return tape_->value(id_); }
template <typename T>
std::span<const T> Var<T>::grad() const { return tape_->grad(id_); }
template <typename T>
bool Var<T>::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace pathmoe
