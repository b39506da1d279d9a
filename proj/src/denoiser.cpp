#include "htmd/denoiser.hpp"

#include "htmd/errors.hpp"

namespace htmd::model {

using diff::Conv1dOptions;
using diff::InitSpec;
using diff::Padding;
using diff::Tensor;

std::vector<SkipShape> skip_shapes(const DenoiserConfig& cfg, std::size_t length) {
    const std::size_t factor = std::size_t{1} << cfg.depth;
    if (length == 0 || length % factor != 0)
        throw ShapeError("denoiser input length " + std::to_string(length) + " is not divisible by 2^" +
                         std::to_string(cfg.depth));
    std::vector<SkipShape> shapes;
    for (std::size_t level = 1; level <= cfg.depth; ++level)
        shapes.push_back({level, length >> (level - 1), cfg.level_channels(level)});
    return shapes;
}

template <typename T>
Denoiser<T>::Denoiser(const DenoiserConfig& cfg, diff::ParameterStore<T>& store, Rng& rng, const std::string& prefix)
    : cfg_(cfg) {
    cfg_.validate();
    Conv1dOptions same;
    same.padding = Padding::same;

    for (std::size_t level = 1; level <= cfg_.depth; ++level) {
        const std::size_t in = level == 1 ? 1 : cfg_.level_channels(level - 1);
        down_.push_back(diff::make_conv(store, rng, prefix + ".down." + std::to_string(level), in,
                                        cfg_.level_channels(level), cfg_.kernel_down, same));
    }

    const std::size_t deepest = cfg_.level_channels(cfg_.depth);
    std::size_t below = 0;  // channels arriving from the bottleneck
    if (cfg_.bottleneck == BottleneckKind::recurrent) {
        const std::size_t H = cfg_.lstm_hidden;
        std::size_t features = deepest;
        for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
            const std::string base = prefix + ".bottleneck.lstm" + std::to_string(l);
            auto make_dir = [&](const std::string& dir) {
                diff::LstmWeights<T> w;
                w.kernel = store.add(base + "." + dir + ".kernel", {4 * H, features},
                                     InitSpec::glorot(static_cast<double>(features), 4.0 * H), rng);
                w.recurrent = store.add(base + "." + dir + ".recurrent", {4 * H, H},
                                        InitSpec::glorot(static_cast<double>(H), 4.0 * H), rng);
                w.bias = store.add(base + "." + dir + ".bias", {4 * H}, InitSpec::lstm_bias(H), rng);
                return w;
            };
            LstmLayer layer;
            layer.forward = make_dir("forward");
            layer.backward = make_dir("backward");
            lstm_.push_back(std::move(layer));
            features = 2 * H;
        }
        adapter_ = diff::make_conv(store, rng, prefix + ".bottleneck.adapter", 2 * H, deepest, 1, Conv1dOptions{});
        below = deepest;
    } else {
        below = cfg_.growth * (cfg_.depth + 1);
        bottleneck_ = diff::make_conv(store, rng, prefix + ".bottleneck.conv", deepest, below, cfg_.kernel_down, same);
    }

    up_.resize(cfg_.depth);
    for (std::size_t level = cfg_.depth; level >= 1; --level) {
        const std::size_t out = cfg_.level_channels(level);
        up_[level - 1] = diff::make_conv(store, rng, prefix + ".up." + std::to_string(level), below + out, out,
                                         cfg_.kernel_up, same);
        below = out;
    }
    output_ = diff::make_conv(store, rng, prefix + ".output", cfg_.level_channels(1), 1, 1, Conv1dOptions{});
}

template <typename T>
Tensor<T> Denoiser<T>::forward(const Tensor<T>& x) const {
    if (x.shape().size() != 3 || x.dim(1) != 1)
        throw ShapeError("denoiser input must be [batch, 1, time], got " + diff::shape_str(x.shape()));
    skip_shapes(cfg_, x.dim(2));  // validates divisibility
    const T slope = static_cast<T>(cfg_.leaky_slope);

    std::vector<Tensor<T>> skips;
    Tensor<T> h = x;
    for (const auto& conv : down_) {
        h = diff::leaky_relu(conv(h), slope);
        skips.push_back(h);
        h = diff::decimate(h);
    }

    if (cfg_.bottleneck == BottleneckKind::recurrent) {
        Tensor<T> s = diff::swap_last_axes(h);
        for (const auto& layer : lstm_) s = diff::bilstm(s, layer.forward, layer.backward, cfg_.lstm_hidden);
        h = adapter_(diff::swap_last_axes(diff::leaky_relu(s, slope)));
    } else {
        h = diff::leaky_relu(bottleneck_(h), slope);
    }

    for (std::size_t level = cfg_.depth; level >= 1; --level) {
        h = diff::upsample_linear(h);
        h = diff::concat<T>({h, skips[level - 1]}, 1);
        h = diff::leaky_relu(up_[level - 1](h), slope);
    }
    return diff::tanh(output_(h));
}

template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace htmd::model
