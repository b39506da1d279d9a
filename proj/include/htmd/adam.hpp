#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "htmd/parameters.hpp"

namespace htmd::train {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One bias-corrected update of a single array. `step` is the 1-based step number.
template <typename T>
void adam_update(diff::Array<T>& param, const diff::Array<T>& grad, diff::Array<T>& m, diff::Array<T>& v,
                 std::size_t step, const AdamConfig& cfg);

template <typename T>
class Adam {
public:
    struct Moments {
        std::string name;
        diff::Array<T> m;
        diff::Array<T> v;
    };

    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // Updates every trainable entry from its accumulated gradient. A non-finite
    // gradient throws NumericFault before anything is modified.
    void step(std::vector<diff::Parameter<T>>& params);

    std::size_t steps() const noexcept { return steps_; }
    void set_steps(std::size_t s) noexcept { steps_ = s; }
    const AdamConfig& config() const noexcept { return cfg_; }
    AdamConfig& config() noexcept { return cfg_; }
    std::vector<Moments>& moments() noexcept { return moments_; }
    const std::vector<Moments>& moments() const noexcept { return moments_; }

private:
    AdamConfig cfg_;
    std::size_t steps_ = 0;
    std::vector<Moments> moments_;
};

}  // namespace htmd::train
