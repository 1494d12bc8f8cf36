// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/tensor/tensor.hpp"

#include <algorithm>

namespace pathmoe {

template <typename T>
T Var<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar of shape " + shape_str(shape()));
    return data()[0];
}

template <typename T>
Var<T> Tape<T>::leaf(Shape shape, std::vector<T> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("leaf: shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " elements, data has " +
                         std::to_string(data.size()));
    }
    if (!all_finite(std::span<const T>(data))) throw NumericError("leaf: non-finite input");
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(data);
    n.requires_grad = requires_grad;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
    if (shape_numel(p.shape) != p.value.size() || p.grad.size() != p.value.size()) {
        throw ShapeError("parameter '" + p.name + "': inconsistent storage for shape " +
                         shape_str(p.shape));
    }
    Node n;
    n.shape = p.shape;
    n.bound_value = p.value.data();
    n.bound_grad = p.grad.data();
    n.bound_size = p.value.size();
    n.requires_grad = p.trainable && grad_enabled_;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::record(Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs,
                       BackwardFn backward) {
    bool needs = false;
    for (const Var<T>& in : inputs) needs = needs || requires_grad(in.id());
    needs = needs && grad_enabled_;

    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = needs;
    nodes_.push_back(std::move(n));
    const auto out = static_cast<std::uint32_t>(nodes_.size() - 1);
    if (needs) {
        Record r;
        r.inputs.reserve(inputs.size());
        for (const Var<T>& in : inputs) r.inputs.push_back(in.id());
        r.output = out;
        r.backward = std::move(backward);
        records_.push_back(std::move(r));
    }
    return Var<T>(this, out);
}

template <typename T>
std::span<const T> Tape<T>::value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    if (n.bound_value) return {n.bound_value, n.bound_size};
    return n.value;
}

template <typename T>
std::span<const T> Tape<T>::grad(std::uint32_t id) const {
    const Node& n = nodes_[id];
    if (n.bound_grad) return {n.bound_grad, n.bound_size};
    return n.grad;
}

template <typename T>
std::span<T> Tape<T>::grad_acc(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.bound_grad) return {n.bound_grad, n.bound_size};
    if (n.grad.empty()) n.grad.assign(shape_numel(n.shape), T(0));
    return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (loss.numel() != 1) {
        throw UsageError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    if (!requires_grad(loss.id())) return;
    grad_acc(loss.id())[0] += T(1);

    std::vector<bool> reached(nodes_.size(), false);
    reached[loss.id()] = true;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (!reached[it->output]) continue;
        it->backward(*this, it->output);
        for (std::uint32_t in : it->inputs) {
            if (nodes_[in].requires_grad) reached[in] = true;
        }
    }
    for (Node& n : nodes_) {
        if (n.is_leaf && n.requires_grad && !n.bound_grad && n.grad.empty()) {
            n.grad.assign(shape_numel(n.shape), T(0));
        }
    }
}

template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace pathmoe
