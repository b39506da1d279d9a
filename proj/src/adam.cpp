#include "htmd/adam.hpp"

#include <cmath>

#include "htmd/errors.hpp"

namespace htmd::train {

template <typename T>
void adam_update(diff::Array<T>& param, const diff::Array<T>& grad, diff::Array<T>& m, diff::Array<T>& v,
                 std::size_t step, const AdamConfig& cfg) {
    if (step == 0) throw ConfigError("adam step numbers start at 1");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
        const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon);
        param[i] = static_cast<T>(static_cast<double>(param[i]) - update);
    }
}

template <typename T>
void Adam<T>::step(std::vector<diff::Parameter<T>>& params) {
    if (moments_.empty()) {
        for (const auto& p : params)
            if (p.trainable)
                moments_.push_back({p.name, diff::Array<T>(p.tensor.shape()), diff::Array<T>(p.tensor.shape())});
    }
    std::size_t k = 0;
    for (const auto& p : params) {
        if (!p.trainable) continue;
        if (k >= moments_.size() || moments_[k].name != p.name)
            throw ConfigError("optimizer state does not match parameter '" + p.name + "'");
        ++k;
        if (p.tensor.has_grad() && !p.tensor.grad().all_finite())
            throw NumericFault("non-finite gradient in '" + p.name + "' at step " + std::to_string(steps_ + 1));
    }
    ++steps_;
    k = 0;
    for (auto& p : params) {
        if (!p.trainable) continue;
        auto& mom = moments_[k++];
        diff::Tensor<T> t = p.tensor;
        adam_update(t.value(), t.grad(), mom.m, mom.v, steps_, cfg_);
    }
}

template void adam_update<float>(diff::Array<float>&, const diff::Array<float>&, diff::Array<float>&,
                                 diff::Array<float>&, std::size_t, const AdamConfig&);
template void adam_update<double>(diff::Array<double>&, const diff::Array<double>&, diff::Array<double>&,
                                  diff::Array<double>&, std::size_t, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace htmd::train
