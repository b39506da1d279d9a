#include "htmd/separator.hpp"

#include "htmd/errors.hpp"

namespace htmd::model {

template <typename T>
Separator<T>::Separator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.uses_masker()) masker_.emplace(cfg_.masker, store_, rng);
    if (cfg_.uses_denoiser()) denoiser_.emplace(cfg_.denoiser, store_, rng);
    set_training(true);
}

template <typename T>
SeparatorOutput<T> Separator<T>::forward(const diff::Tensor<T>& mixture) {
    SeparatorOutput<T> out;
    switch (cfg_.architecture) {
        case Architecture::htmd:
            out.intermediate = masker_->forward(mixture).estimate;
            out.final_estimate = denoiser_->forward(out.intermediate);
            break;
        case Architecture::conv_tasnet:
            out.final_estimate = masker_->forward(mixture).estimate;
            break;
        case Architecture::wave_u_net:
            out.final_estimate = denoiser_->forward(mixture);
            break;
    }
    return out;
}

template <typename T>
void Separator<T>::set_training(bool training) {
    training_ = training;
    if (masker_) masker_->set_mode(training ? diff::NormMode::train : diff::NormMode::eval);
}

template <typename T>
Separator<T> build_htmd(const MaskerConfig& masker, const DenoiserConfig& denoiser, Rng& rng,
                        std::size_t input_length) {
    ModelConfig cfg;
    cfg.architecture = Architecture::htmd;
    cfg.masker = masker;
    cfg.denoiser = denoiser;
    cfg.input_length = input_length;
    return Separator<T>(cfg, rng);
}

template <typename Dst, typename Src>
void copy_weights(Separator<Dst>& dst, const Separator<Src>& src) {
    auto& d = dst.parameters().entries();
    const auto& s = src.parameters().entries();
    if (d.size() != s.size()) throw ConfigError("copy_weights: parameter layouts differ");
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i].name != s[i].name || d[i].tensor.shape() != s[i].tensor.shape())
            throw ConfigError("copy_weights: mismatch at '" + d[i].name + "'");
        auto& dv = d[i].tensor.value();
        const auto& sv = s[i].tensor.value();
        for (std::size_t k = 0; k < dv.size(); ++k) dv[k] = static_cast<Dst>(sv[k]);
    }
}

template class Separator<float>;
template class Separator<double>;
template Separator<float> build_htmd<float>(const MaskerConfig&, const DenoiserConfig&, Rng&, std::size_t);
template Separator<double> build_htmd<double>(const MaskerConfig&, const DenoiserConfig&, Rng&, std::size_t);
template void copy_weights<float, float>(Separator<float>&, const Separator<float>&);
template void copy_weights<double, float>(Separator<double>&, const Separator<float>&);
template void copy_weights<float, double>(Separator<float>&, const Separator<double>&);
template void copy_weights<double, double>(Separator<double>&, const Separator<double>&);

}  // namespace htmd::model
