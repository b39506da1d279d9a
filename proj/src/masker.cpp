#include "htmd/masker.hpp"

#include "htmd/errors.hpp"

namespace htmd::model {

using diff::Conv1dOptions;
using diff::InitSpec;
using diff::Padding;
using diff::Tensor;

template <typename T>
Masker<T>::Masker(const MaskerConfig& cfg, diff::ParameterStore<T>& store, Rng& rng, const std::string& prefix)
    : cfg_(cfg) {
    cfg_.validate();
    norm_.momentum = cfg_.bn_momentum;
    norm_.eps = cfg_.bn_eps;
    const std::size_t N = cfg_.n_filters, L = cfg_.kernel_len;
    const std::size_t B = cfg_.bottleneck, H = cfg_.conv_channels, Sc = cfg_.skip_channels;

    encoder_ = store.add(prefix + ".encoder.weight", {N, 1, L}, InitSpec::glorot(L, N * L), rng);
    input_norm_ = diff::make_batch_norm(store, prefix + ".input_norm", N);
    bottleneck_ = diff::make_conv(store, rng, prefix + ".bottleneck", N, B, 1, Conv1dOptions{});

    const std::size_t total = cfg_.repeats * cfg_.blocks_per_repeat;
    for (std::size_t r = 0; r < cfg_.repeats; ++r)
        for (std::size_t i = 0; i < cfg_.blocks_per_repeat; ++i) {
            const std::size_t index = r * cfg_.blocks_per_repeat + i;
            const std::string name = prefix + ".blocks." + std::to_string(index);
            Block block;
            block.conv_in = diff::make_conv(store, rng, name + ".conv_in", B, H, 1, Conv1dOptions{});
            block.norm1 = diff::make_batch_norm(store, name + ".norm1", H);
            Conv1dOptions dw;
            dw.dilation = std::size_t{1} << i;
            dw.groups = H;
            dw.padding = Padding::same;
            block.depthwise = diff::make_conv(store, rng, name + ".depthwise", H, H, cfg_.kernel, dw);
            block.norm2 = diff::make_batch_norm(store, name + ".norm2", H);
            block.skip = diff::make_conv(store, rng, name + ".skip", H, Sc, 1, Conv1dOptions{});
            block.has_residual = index + 1 < total;
            if (block.has_residual)
                block.residual = diff::make_conv(store, rng, name + ".residual", H, B, 1, Conv1dOptions{});
            blocks_.push_back(std::move(block));
        }

    mask_out_ = diff::make_conv(store, rng, prefix + ".mask_out", Sc, N, 1, Conv1dOptions{});
    decoder_ = store.add(prefix + ".decoder.weight", {N, 1, L}, InitSpec::glorot(N * L, L), rng);
}

template <typename T>
LatentFrames<T> Masker<T>::encode(const Tensor<T>& x) const {
    if (x.shape().size() != 3 || x.dim(1) != 1)
        throw ShapeError("masker input must be [batch, 1, time], got " + diff::shape_str(x.shape()));
    if (x.dim(2) < cfg_.kernel_len)
        throw ShapeError("masker input of " + std::to_string(x.dim(2)) + " samples is shorter than one frame (" +
                         std::to_string(cfg_.kernel_len) + ")");
    Conv1dOptions opt;
    opt.stride = cfg_.stride;
    return {diff::conv1d(x, encoder_, Tensor<T>{}, opt), cfg_.stride, cfg_.kernel_len};
}

template <typename T>
Tensor<T> Masker<T>::estimate_mask(const LatentFrames<T>& latent) {
    const Tensor<T>& z = latent.tensor;
    if (z.shape().size() != 3 || z.dim(1) != cfg_.n_filters)
        throw ShapeError("latent must have " + std::to_string(cfg_.n_filters) + " channels, got " +
                         diff::shape_str(z.shape()));
    const T slope = static_cast<T>(cfg_.leaky_slope);
    Tensor<T> y = bottleneck_(input_norm_(z, norm_));
    Tensor<T> skip_sum;
    for (auto& block : blocks_) {
        Tensor<T> h = block.norm1(diff::leaky_relu(block.conv_in(y), slope), norm_);
        h = block.norm2(diff::leaky_relu(block.depthwise(h), slope), norm_);
        Tensor<T> s = block.skip(h);
        skip_sum = skip_sum.defined() ? diff::add(skip_sum, s) : s;
        if (block.has_residual) y = diff::add(y, block.residual(h));
    }
    return diff::sigmoid(mask_out_(diff::leaky_relu(skip_sum, slope)));
}

template <typename T>
LatentFrames<T> Masker<T>::apply_mask(const LatentFrames<T>& latent, const Tensor<T>& mask) {
    return {diff::mul(latent.tensor, mask), latent.frame_stride, latent.frame_len};
}

template <typename T>
Tensor<T> Masker<T>::decode(const LatentFrames<T>& latent) const {
    if (latent.tensor.shape().size() != 3 || latent.tensor.dim(1) != cfg_.n_filters)
        throw ShapeError("decoder expects " + std::to_string(cfg_.n_filters) + " latent channels, got " +
                         diff::shape_str(latent.tensor.shape()));
    return diff::conv_transpose1d(latent.tensor, decoder_, Tensor<T>{}, cfg_.stride);
}

template <typename T>
MaskerOutput<T> Masker<T>::forward(const Tensor<T>& x) {
    MaskerOutput<T> out;
    out.latent = encode(x);
    out.mask = estimate_mask(out.latent);
    out.estimate = decode(apply_mask(out.latent, out.mask));
    return out;
}

template class Masker<float>;
template class Masker<double>;

}  // namespace htmd::model
