#pragma once
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aptm/errors.hpp"

namespace aptm::numcore {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    if (s.empty()) throw ShapeError("tensor shape must have at least one extent");
    std::size_t n = 1;
    for (int e : s) {
        if (e <= 0) throw ShapeError("tensor extents must be positive");
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class S>
struct TensorT;

// Backward closure: reads the output's grad and accumulates into parents.
template <class S>
struct NodeT {
    std::vector<TensorT<S>> parents;
    std::function<void(TensorT<S>&)> backward;
};

// Dense row-major tensor. Value semantics with shared storage: copies alias
// the same data/grad buffers. Data is immutable once an op has produced it;
// only grad accumulates.
template <class S>
struct TensorT {
    Shape shape{};
    std::shared_ptr<std::vector<S>> data{};
    std::shared_ptr<std::vector<S>> grad{};
    bool requires_grad{false};
    std::shared_ptr<NodeT<S>> node{};

    TensorT() = default;

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        TensorT t;
        const std::size_t n = shape_numel(shape);
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<S>>(n, S{0});
        t.requires_grad = requires_grad;
        return t;
    }

    static TensorT full(Shape shape, S value, bool requires_grad = false) {
        TensorT t = zeros(std::move(shape), requires_grad);
        for (S& v : *t.data) v = value;
        return t;
    }

    static TensorT scalar(S value, bool requires_grad = false) {
        return full({1}, value, requires_grad);
    }

    static TensorT from_vector(Shape shape, std::vector<S> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size()) {
            throw ShapeError("from_vector: element count does not match shape " + shape_str(shape));
        }
        TensorT t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<S>>(std::move(values));
        t.requires_grad = requires_grad;
        return t;
    }

    bool defined() const { return static_cast<bool>(data); }
    std::size_t size() const { return data ? data->size() : 0; }
    int rank() const { return static_cast<int>(shape.size()); }
    int extent(int axis) const { return shape[static_cast<std::size_t>(axis)]; }
    bool is_scalar() const { return size() == 1; }

    S item() const {
        if (!is_scalar()) throw ContractError("item: tensor is not scalar, shape " + shape_str(shape));
        return (*data)[0];
    }

    S* values() { return data->data(); }
    const S* values() const { return data->data(); }
    S* grads() { return grad->data(); }
    const S* grads() const { return grad->data(); }

    void ensure_grad() {
        if (!grad) grad = std::make_shared<std::vector<S>>(size(), S{0});
    }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), S{0});
    }
};

// Thread-local switch: with grads disabled no graph is recorded (inference).
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Reverse-mode pass from a scalar root. Topological order is structural
// (DFS over parents in registration order), so repeated passes over the same
// graph accumulate identically.
template <class S>
void backward(TensorT<S>& root) {
    if (!root.is_scalar()) {
        throw ContractError("backward: root must be scalar, shape " + shape_str(root.shape));
    }
    root.ensure_grad();
    (*root.grad)[0] += S{1};
    if (!root.node) return;

    struct Frame {
        TensorT<S> t;
        std::size_t next = 0;
    };
    std::vector<TensorT<S>> order;
    std::unordered_set<NodeT<S>*> seen;
    std::vector<Frame> stack;
    seen.insert(root.node.get());
    stack.push_back({root, 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        auto& parents = f.t.node->parents;
        bool descended = false;
        while (f.next < parents.size()) {
            TensorT<S>& p = parents[f.next++];
            if (p.node && seen.insert(p.node.get()).second) {
                stack.push_back({p, 0});
                descended = true;
                break;
            }
        }
        if (descended) continue;
        order.push_back(f.t);
        stack.pop_back();
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        it->node->backward(*it);
    }
}

using Tensor = TensorT<float>;

}  // namespace aptm::numcore
