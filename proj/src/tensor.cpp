#include "htmd/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "htmd/errors.hpp"

namespace htmd::diff {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ']';
    return os.str();
}

template <typename T>
Array<T>::Array(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
Array<T>::Array(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
        throw ShapeError("array data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
}

template <typename T>
void Array<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Array<T>::all_finite() const {
    for (const auto v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

template <typename T>
void Array<T>::add_inplace(const Array& other) {
    if (other.shape_ != shape_)
        throw ShapeError("add_inplace shape mismatch " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    T* dst = data_.data();
    const T* src = other.data_.data();
    const std::size_t n = data_.size();
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

template <typename T>
Array<T> Array<T>::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Array(std::move(shape), data_);
}

template <typename T>
Tensor<T>::Tensor(Array<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

template <typename T>
const Array<T>& Tensor<T>::grad() const {
    if (node_->grad.empty()) node_->grad = Array<T>(node_->value.shape());
    return node_->grad;
}

template <typename T>
Array<T>& Tensor<T>::grad_slot() {
    if (node_->grad.empty()) node_->grad = Array<T>(node_->value.shape());
    return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (node_) node_->grad = Array<T>();
}

template <typename T>
void Tensor<T>::accumulate_grad(const Array<T>& g) const {
    if (!node_ || !node_->requires_grad) return;
    if (node_->grad.empty())
        node_->grad = g;
    else
        node_->grad.add_inplace(g);
}

template <typename T>
Tensor<T> make_result(Array<T> value, std::vector<Tensor<T>> parents,
                      std::function<void(const Array<T>&)> backward) {
    Tensor<T> out(std::move(value), false);
    if (!g_grad_enabled) return out;
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (!needs) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    node.parents.reserve(parents.size());
    for (const auto& p : parents)
        if (p.requires_grad()) node.parents.push_back(p.node());
    node.backward = std::move(backward);
    return out;
}

template <typename T>
void backward(const Tensor<T>& root) {
    if (!root.defined() || root.size() != 1) throw ShapeError("backward() needs a scalar root");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    Node<T>& r = *root.node();
    Array<T> seed(r.value.shape(), T{1});
    if (r.grad.empty())
        r.grad = seed;
    else
        r.grad.add_inplace(seed);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(node->grad);
    }
}

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
    return Tensor<T>(x.value(), false);
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

#define HTMD_INSTANTIATE(T)                                                                       \
    template class Array<T>;                                                                      \
    template class Tensor<T>;                                                                     \
    template Tensor<T> make_result<T>(Array<T>, std::vector<Tensor<T>>,                           \
                                      std::function<void(const Array<T>&)>);                      \
    template void backward<T>(const Tensor<T>&);                                                  \
    template Tensor<T> detach<T>(const Tensor<T>&);

HTMD_INSTANTIATE(float)
HTMD_INSTANTIATE(double)
#undef HTMD_INSTANTIATE

}  // namespace htmd::diff
