#pragma once

#include <string>
#include <vector>

#include "htmd/model_config.hpp"
#include "htmd/parameters.hpp"

namespace htmd::model {

template <typename T>
struct LatentFrames {
    diff::Tensor<T> tensor;  // [batch, N, frames]
    std::size_t frame_stride = 0;
    std::size_t frame_len = 0;

    std::size_t frames() const { return tensor.dim(2); }
};

template <typename T>
struct MaskerOutput {
    diff::Tensor<T> estimate;  // [batch, 1, T]
    LatentFrames<T> latent;
    diff::Tensor<T> mask;
};

// Linear strided encoder, dilated-TCN mask estimator and transposed-conv decoder.
template <typename T>
class Masker {
public:
    Masker(const MaskerConfig& cfg, diff::ParameterStore<T>& store, Rng& rng, const std::string& prefix = "masker");

    LatentFrames<T> encode(const diff::Tensor<T>& x) const;
    diff::Tensor<T> estimate_mask(const LatentFrames<T>& latent);
    static LatentFrames<T> apply_mask(const LatentFrames<T>& latent, const diff::Tensor<T>& mask);
    diff::Tensor<T> decode(const LatentFrames<T>& latent) const;

    // decode(apply_mask(z, estimate_mask(z))) with z = encode(x) computed once.
    MaskerOutput<T> forward(const diff::Tensor<T>& x);

    void set_mode(diff::NormMode mode) { norm_.mode = mode; }
    const MaskerConfig& config() const noexcept { return cfg_; }

private:
    struct Block {
        diff::ConvLayer<T> conv_in;
        diff::BatchNormLayer<T> norm1;
        diff::ConvLayer<T> depthwise;
        diff::BatchNormLayer<T> norm2;
        diff::ConvLayer<T> skip;
        diff::ConvLayer<T> residual;  // absent on the last block, whose residual is never consumed
        bool has_residual = true;
    };

    MaskerConfig cfg_;
    diff::BatchNormOptions norm_;
    diff::Tensor<T> encoder_;  // [N, 1, L]
    diff::BatchNormLayer<T> input_norm_;
    diff::ConvLayer<T> bottleneck_;
    std::vector<Block> blocks_;
    diff::ConvLayer<T> mask_out_;
    diff::Tensor<T> decoder_;  // [N, 1, L]
};

}  // namespace htmd::model
