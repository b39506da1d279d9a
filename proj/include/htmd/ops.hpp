#pragma once

// Differentiable primitives. Every op records a backward closure when any input
// requires gradients; layouts are [batch, channels, time] unless stated otherwise.

#include <cstddef>
#include <vector>

#include "htmd/tensor.hpp"

namespace htmd::diff {

enum class Padding { none, same };

struct Conv1dOptions {
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::size_t groups = 1;
    Padding padding = Padding::none;
};

// Cross-correlation. weight: [out, in / groups, k]; bias: [out] or undefined.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv1dOptions& options);

// Output time = (time - 1) * stride + k. weight: [in, out, k]; bias: [out] or undefined.
// With the same weight array this is the adjoint of conv1d (no padding, one group).
template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride);

enum class NormMode { train, eval };

struct BatchNormOptions {
    NormMode mode = NormMode::train;
    double momentum = 0.1;  // weight of the new batch statistic in the running average
    double eps = 1e-5;
};

// Running statistics live in non-trainable tensors so they can be shared and saved.
template <typename T>
struct RunningStats {
    Tensor<T> mean;  // [channels]
    Tensor<T> var;   // [channels]
};

// Per-channel normalization over (batch, time). Train mode normalizes by the biased
// batch variance and folds the unbiased one into the running estimate.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     RunningStats<T>& stats, const BatchNormOptions& options);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.3));
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

// Single-direction LSTM parameters, gate order (input, forget, candidate, output).
template <typename T>
struct LstmWeights {
    Tensor<T> kernel;     // [4 * hidden, features]
    Tensor<T> recurrent;  // [4 * hidden, hidden]
    Tensor<T> bias;       // [4 * hidden]
};

// x: [batch, time, features] -> [batch, time, 2 * hidden]; forward direction first.
template <typename T>
Tensor<T> bilstm(const Tensor<T>& x, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd,
                 std::size_t hidden);

// Keeps even time indices of the last axis.
template <typename T>
Tensor<T> decimate(const Tensor<T>& x);

// Doubles the last axis by linear interpolation; the final sample is repeated.
template <typename T>
Tensor<T> upsample_linear(const Tensor<T>& x);

// Rank-3 [a, b, c] -> [a, c, b].
template <typename T>
Tensor<T> swap_last_axes(const Tensor<T>& x);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

// Contracts the last axis of x with W: [out, in]; bias [out] or undefined.
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Sum of x * r for a constant r of the same shape; used to project outputs to a scalar.
template <typename T>
Tensor<T> dot_constant(const Tensor<T>& x, const Array<T>& r);

}  // namespace htmd::diff
