#pragma once

// Dense row-major arrays and a small reverse-mode autograd graph on top of them.
//
// Array<T> is a plain value type (shape + contiguous data). Tensor<T> is a shared
// handle to a graph node that owns an Array value, an optional gradient Array and
// the closure that pushes its gradient to the nodes it was computed from.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace htmd::diff {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Array {
public:
    Array() = default;
    explicit Array(Shape shape, T fill = T{0});
    Array(Shape shape, std::vector<T> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    void fill(T value);
    bool all_finite() const;

    // Elementwise this += other; shapes must match.
    void add_inplace(const Array& other);

    // Same data under a different shape with equal element count.
    Array reshaped(Shape shape) const;

private:
    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
struct Node {
    Array<T> value;
    Array<T> grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Array<T>&)> backward;
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Array<T> value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }

    const Array<T>& value() const { return node_->value; }
    Array<T>& value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t size() const { return node_->value.size(); }
    std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    // Gradient accumulated so far; zero-filled and shape-matched if none yet.
    const Array<T>& grad() const;
    // Mutable gradient slot, allocated (zero) on first use.
    Array<T>& grad_slot();
    void zero_grad();

    // Adds `g` into this tensor's gradient if it participates in differentiation.
    void accumulate_grad(const Array<T>& g) const;

    const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

    // Identity of the underlying node, used for graph bookkeeping.
    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

// Create a graph result. The backward closure receives d(loss)/d(result) and must
// accumulate into the parents. No graph is recorded when gradients are disabled or
// no parent requires them.
template <typename T>
Tensor<T> make_result(Array<T> value, std::vector<Tensor<T>> parents,
                      std::function<void(const Array<T>&)> backward);

// Reverse-mode sweep from a scalar (single element) root with seed gradient 1.
template <typename T>
void backward(const Tensor<T>& root);

// A value detached from the graph (shares no history).
template <typename T>
Tensor<T> detach(const Tensor<T>& x);

bool grad_enabled() noexcept;

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace htmd::diff
