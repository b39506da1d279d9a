#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "htmd/ops.hpp"
#include "htmd/rng.hpp"
#include "htmd/tensor.hpp"

namespace htmd::diff {

// How a parameter is initialized.
struct InitSpec {
    enum class Kind { glorot_uniform, constant, lstm_bias };
    Kind kind = Kind::constant;
    double fan_in = 0.0;
    double fan_out = 0.0;
    double value = 0.0;
    std::size_t hidden = 0;  // lstm_bias: forget-gate slice [hidden, 2 * hidden) set to 1

    static InitSpec glorot(double fan_in, double fan_out) { return {Kind::glorot_uniform, fan_in, fan_out, 0.0, 0}; }
    static InitSpec constant(double v) { return {Kind::constant, 0.0, 0.0, v, 0}; }
    static InitSpec lstm_bias(std::size_t hidden) { return {Kind::lstm_bias, 0.0, 0.0, 0.0, hidden}; }
};

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> tensor;
    InitSpec init;
    bool trainable = true;  // false for running statistics
};

// Ordered registry of a model's parameters and buffers. Names are unique.
template <typename T>
class ParameterStore {
public:
    Tensor<T> add(const std::string& name, Shape shape, const InitSpec& init, Rng& rng);
    Tensor<T> add_buffer(const std::string& name, Shape shape, T fill);

    const std::vector<Parameter<T>>& entries() const noexcept { return entries_; }
    std::vector<Parameter<T>>& entries() noexcept { return entries_; }

    const Parameter<T>* find(const std::string& name) const;

    void zero_grad();

private:
    void check_unique(const std::string& name) const;
    std::vector<Parameter<T>> entries_;
};

template <typename T>
void initialize(Array<T>& values, const InitSpec& init, Rng& rng);

// Number of trainable scalars. Throws on duplicate names; a tensor registered under
// two names is counted once.
template <typename T>
std::size_t param_count(const ParameterStore<T>& store);
template <typename T>
std::size_t param_count(const std::vector<Parameter<T>>& entries);

// Convenience bundles used by the networks.
template <typename T>
struct ConvLayer {
    Tensor<T> weight;
    Tensor<T> bias;
    Conv1dOptions options;

    Tensor<T> operator()(const Tensor<T>& x) const { return conv1d(x, weight, bias, options); }
};

template <typename T>
ConvLayer<T> make_conv(ParameterStore<T>& store, Rng& rng, const std::string& name, std::size_t in,
                       std::size_t out, std::size_t kernel, const Conv1dOptions& options, bool with_bias = true);

template <typename T>
struct BatchNormLayer {
    Tensor<T> gamma;
    Tensor<T> beta;
    RunningStats<T> stats;

    Tensor<T> operator()(const Tensor<T>& x, const BatchNormOptions& options) {
        return batch_norm(x, gamma, beta, stats, options);
    }
};

template <typename T>
BatchNormLayer<T> make_batch_norm(ParameterStore<T>& store, const std::string& name, std::size_t channels);

}  // namespace htmd::diff
