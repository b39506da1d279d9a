#pragma once

#include <cstdint>
#include <optional>

#include "htmd/denoiser.hpp"
#include "htmd/masker.hpp"
#include "htmd/model_config.hpp"
#include "htmd/parameters.hpp"

namespace htmd::model {

template <typename T>
struct SeparatorOutput {
    diff::Tensor<T> final_estimate;  // [batch, 1, T]
    diff::Tensor<T> intermediate;    // masker estimate; undefined for single-stage models
};

// One of the three architectures, selected by ModelConfig::architecture:
// masker -> denoiser (HTMD-Net), masker only (Conv-TasNet), denoiser only (Wave-U-Net).
template <typename T>
class Separator {
public:
    Separator(const ModelConfig& cfg, Rng& rng);

    SeparatorOutput<T> forward(const diff::Tensor<T>& mixture);

    // Train mode normalizes with batch statistics; eval mode with running statistics.
    void set_training(bool training);
    bool training() const noexcept { return training_; }

    const ModelConfig& config() const noexcept { return cfg_; }
    diff::ParameterStore<T>& parameters() noexcept { return store_; }
    const diff::ParameterStore<T>& parameters() const noexcept { return store_; }
    std::size_t param_count() const { return diff::param_count(store_); }

    Masker<T>* masker() { return masker_ ? &*masker_ : nullptr; }
    Denoiser<T>* denoiser() { return denoiser_ ? &*denoiser_ : nullptr; }

private:
    ModelConfig cfg_;
    diff::ParameterStore<T> store_;
    std::optional<Masker<T>> masker_;
    std::optional<Denoiser<T>> denoiser_;
    bool training_ = true;
};

// Composite masking + denoising model.
template <typename T>
Separator<T> build_htmd(const MaskerConfig& masker, const DenoiserConfig& denoiser, Rng& rng,
                        std::size_t input_length = 16384);

// Copies every parameter and buffer value from `src` into `dst` (same config layout).
template <typename Dst, typename Src>
void copy_weights(Separator<Dst>& dst, const Separator<Src>& src);

}  // namespace htmd::model
