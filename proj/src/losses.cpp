#include "htmd/losses.hpp"

#include <cmath>

#include "htmd/errors.hpp"
#include "htmd/ops.hpp"

namespace htmd::train {

using diff::Array;
using diff::Tensor;

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::mse: return "mse";
        case LossKind::mae: return "mae";
        case LossKind::none: return "none";
    }
    return "none";
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "mse") return LossKind::mse;
    if (name == "mae") return LossKind::mae;
    if (name == "none" || name == "-") return LossKind::none;
    throw ConfigError("unknown loss '" + name + "' (expected mse, mae or none)");
}

void LossSpec::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("loss weight alpha must be > 0");
    if (!(beta >= 0.0)) throw ConfigError("loss weight beta must be >= 0");
    if (l1 == LossKind::none) throw ConfigError("the final-estimate loss cannot be none");
    if ((l2 == LossKind::none) != (beta == 0.0))
        throw ConfigError("intermediate loss is none exactly when beta == 0");
}

LossSpec LossSpec::preset(const std::string& name) {
    if (name == "mse-mse") return {LossKind::mse, LossKind::mse, 1.0, 0.5};
    if (name == "mae-mae") return {LossKind::mae, LossKind::mae, 1.0, 0.5};
    if (name == "mae-mse") return {LossKind::mse, LossKind::mae, 1.0, 0.05};
    if (name == "mse-mae") return {LossKind::mae, LossKind::mse, 0.1, 1.0};
    if (name == "none-mse") return {LossKind::mse, LossKind::none, 1.0, 0.0};
    if (name == "none-mae") return {LossKind::mae, LossKind::none, 1.0, 0.0};
    throw ConfigError("unknown loss preset '" + name + "'");
}

std::vector<std::string> LossSpec::preset_names() {
    return {"mse-mse", "mae-mae", "mae-mse", "mse-mae", "none-mse", "none-mae"};
}

namespace {

template <typename T>
void check_shapes(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + diff::shape_str(a.shape()) + " vs " +
                         diff::shape_str(b.shape()));
}

}  // namespace

template <typename T>
Tensor<T> mse(const Tensor<T>& target, const Tensor<T>& estimate) {
    check_shapes(target, estimate, "mse");
    const auto& y = target.value();
    const auto& e = estimate.value();
    const std::size_t n = y.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(e[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    Array<T> out({1}, static_cast<T>(acc / static_cast<double>(n)));
    return diff::make_result<T>(std::move(out), {target, estimate}, [target, estimate, n](const Array<T>& g) {
        const T k = static_cast<T>(2.0 * static_cast<double>(g[0]) / static_cast<double>(n));
        Array<T> ge(estimate.shape());
        const auto& y = target.value();
        const auto& e = estimate.value();
        for (std::size_t i = 0; i < n; ++i) ge[i] = k * (e[i] - y[i]);
        if (estimate.requires_grad()) estimate.accumulate_grad(ge);
        if (target.requires_grad()) {
            for (auto& v : ge.values()) v = -v;
            target.accumulate_grad(ge);
        }
    });
}

template <typename T>
Tensor<T> mae(const Tensor<T>& target, const Tensor<T>& estimate) {
    check_shapes(target, estimate, "mae");
    const auto& y = target.value();
    const auto& e = estimate.value();
    const std::size_t n = y.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(e[i]) - static_cast<double>(y[i]));
    Array<T> out({1}, static_cast<T>(acc / static_cast<double>(n)));
    return diff::make_result<T>(std::move(out), {target, estimate}, [target, estimate, n](const Array<T>& g) {
        const T k = static_cast<T>(static_cast<double>(g[0]) / static_cast<double>(n));
        Array<T> ge(estimate.shape());
        const auto& y = target.value();
        const auto& e = estimate.value();
        for (std::size_t i = 0; i < n; ++i) {
            const T d = e[i] - y[i];
            ge[i] = d > T(0) ? k : (d < T(0) ? -k : T(0));
        }
        if (estimate.requires_grad()) estimate.accumulate_grad(ge);
        if (target.requires_grad()) {
            for (auto& v : ge.values()) v = -v;
            target.accumulate_grad(ge);
        }
    });
}

template <typename T>
Tensor<T> loss(LossKind kind, const Tensor<T>& target, const Tensor<T>& estimate) {
    switch (kind) {
        case LossKind::mse: return mse(target, estimate);
        case LossKind::mae: return mae(target, estimate);
        case LossKind::none: break;
    }
    throw ConfigError("loss(): kind none has no value");
}

template <typename T>
Tensor<T> deep_loss(const Tensor<T>& target, const Tensor<T>& final_estimate, const Tensor<T>& intermediate,
                    const LossSpec& spec) {
    spec.validate();
    Tensor<T> total = diff::scale(loss(spec.l1, target, final_estimate), static_cast<T>(spec.alpha));
    if (spec.beta == 0.0) return total;
    if (!intermediate.defined()) throw ConfigError("beta > 0 needs an intermediate estimate");
    return diff::add(total, diff::scale(loss(spec.l2, target, intermediate), static_cast<T>(spec.beta)));
}

#define HTMD_INSTANTIATE(T)                                                                        \
    template Tensor<T> mse<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> mae<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> loss<T>(LossKind, const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> deep_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossSpec&);
HTMD_INSTANTIATE(float)
HTMD_INSTANTIATE(double)
#undef HTMD_INSTANTIATE

}  // namespace htmd::train
