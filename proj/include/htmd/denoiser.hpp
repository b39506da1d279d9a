#pragma once

#include <string>
#include <vector>

#include "htmd/model_config.hpp"
#include "htmd/parameters.hpp"

namespace htmd::model {

struct SkipShape {
    std::size_t level;     // 1-based
    std::size_t time_len;  // pre-decimation length at this level
    std::size_t channels;
};

// Skip tensors stored by each encoder level for an input of `length` samples.
std::vector<SkipShape> skip_shapes(const DenoiserConfig& cfg, std::size_t length);

// Wave-U-Net style encoder/decoder with either a bidirectional-LSTM or a
// convolutional bottleneck and a tanh output.
template <typename T>
class Denoiser {
public:
    Denoiser(const DenoiserConfig& cfg, diff::ParameterStore<T>& store, Rng& rng,
             const std::string& prefix = "denoiser");

    // x: [batch, 1, T] with T divisible by 2^depth.
    diff::Tensor<T> forward(const diff::Tensor<T>& x) const;

    const DenoiserConfig& config() const noexcept { return cfg_; }

private:
    struct LstmLayer {
        diff::LstmWeights<T> forward;
        diff::LstmWeights<T> backward;
    };

    DenoiserConfig cfg_;
    std::vector<diff::ConvLayer<T>> down_;
    std::vector<LstmLayer> lstm_;
    diff::ConvLayer<T> adapter_;     // recurrent bottleneck: 2 * hidden -> growth * depth
    diff::ConvLayer<T> bottleneck_;  // convolutional bottleneck
    std::vector<diff::ConvLayer<T>> up_;  // up_[i - 1] serves level i
    diff::ConvLayer<T> output_;
};

}  // namespace htmd::model
