#pragma once

#include <string>
#include <vector>

#include "htmd/tensor.hpp"

namespace htmd::train {

enum class LossKind { mse, mae, none };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

// L = alpha * L1(final) + beta * L2(intermediate).
struct LossSpec {
    LossKind l1 = LossKind::mse;
    LossKind l2 = LossKind::mse;
    double alpha = 1.0;
    double beta = 0.5;

    void validate() const;

    // Named "<L2>-<L1>": mse-mse, mae-mae, mae-mse, mse-mae, none-mse, none-mae.
    static LossSpec preset(const std::string& name);
    static std::vector<std::string> preset_names();
};

template <typename T>
diff::Tensor<T> mse(const diff::Tensor<T>& target, const diff::Tensor<T>& estimate);
template <typename T>
diff::Tensor<T> mae(const diff::Tensor<T>& target, const diff::Tensor<T>& estimate);
template <typename T>
diff::Tensor<T> loss(LossKind kind, const diff::Tensor<T>& target, const diff::Tensor<T>& estimate);

// With beta == 0 the intermediate estimate is not touched and may be undefined.
template <typename T>
diff::Tensor<T> deep_loss(const diff::Tensor<T>& target, const diff::Tensor<T>& final_estimate,
                          const diff::Tensor<T>& intermediate, const LossSpec& spec);

}  // namespace htmd::train
