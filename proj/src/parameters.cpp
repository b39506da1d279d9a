#include "htmd/parameters.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "htmd/errors.hpp"

namespace htmd {

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::set_state(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw CheckpointError("corrupt random generator state");
}

}  // namespace htmd

namespace htmd::diff {

template <typename T>
void ParameterStore<T>::check_unique(const std::string& name) const {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
}

template <typename T>
Tensor<T> ParameterStore<T>::add(const std::string& name, Shape shape, const InitSpec& init, Rng& rng) {
    check_unique(name);
    Array<T> values(std::move(shape));
    initialize(values, init, rng);
    Tensor<T> t(std::move(values), true);
    entries_.push_back({name, t, init, true});
    return t;
}

template <typename T>
Tensor<T> ParameterStore<T>::add_buffer(const std::string& name, Shape shape, T fill) {
    check_unique(name);
    Tensor<T> t(Array<T>(std::move(shape), fill), false);
    entries_.push_back({name, t, InitSpec::constant(static_cast<double>(fill)), false});
    return t;
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
void initialize(Array<T>& values, const InitSpec& init, Rng& rng) {
    switch (init.kind) {
        case InitSpec::Kind::glorot_uniform: {
            const double limit = std::sqrt(6.0 / (init.fan_in + init.fan_out));
            for (auto& v : values.values()) v = static_cast<T>(rng.uniform(-limit, limit));
            break;
        }
        case InitSpec::Kind::constant:
            values.fill(static_cast<T>(init.value));
            break;
        case InitSpec::Kind::lstm_bias:
            values.fill(T(0));
            for (std::size_t k = init.hidden; k < 2 * init.hidden && k < values.size(); ++k) values[k] = T(1);
            break;
    }
}

template <typename T>
std::size_t param_count(const std::vector<Parameter<T>>& entries) {
    std::unordered_set<std::string> names;
    std::unordered_set<const Node<T>*> nodes;
    std::size_t total = 0;
    for (const auto& e : entries) {
        if (!names.insert(e.name).second) throw ConfigError("duplicate parameter name '" + e.name + "'");
        if (!e.trainable) continue;
        if (nodes.insert(e.tensor.node().get()).second) total += e.tensor.size();
    }
    return total;
}

template <typename T>
std::size_t param_count(const ParameterStore<T>& store) {
    return param_count(store.entries());
}

template <typename T>
ConvLayer<T> make_conv(ParameterStore<T>& store, Rng& rng, const std::string& name, std::size_t in,
                       std::size_t out, std::size_t kernel, const Conv1dOptions& options, bool with_bias) {
    const std::size_t groups = options.groups;
    const double fan_in = static_cast<double>(in / groups * kernel);
    const double fan_out = static_cast<double>(out / groups * kernel);
    ConvLayer<T> layer;
    layer.options = options;
    layer.weight = store.add(name + ".weight", {out, in / groups, kernel}, InitSpec::glorot(fan_in, fan_out), rng);
    if (with_bias) layer.bias = store.add(name + ".bias", {out}, InitSpec::constant(0.0), rng);
    return layer;
}

template <typename T>
BatchNormLayer<T> make_batch_norm(ParameterStore<T>& store, const std::string& name, std::size_t channels) {
    Rng unused(0);
    BatchNormLayer<T> layer;
    layer.gamma = store.add(name + ".gamma", {channels}, InitSpec::constant(1.0), unused);
    layer.beta = store.add(name + ".beta", {channels}, InitSpec::constant(0.0), unused);
    layer.stats.mean = store.add_buffer(name + ".running_mean", {channels}, T(0));
    layer.stats.var = store.add_buffer(name + ".running_var", {channels}, T(1));
    return layer;
}

#define HTMD_INSTANTIATE(T)                                                                                   \
    template class ParameterStore<T>;                                                                         \
    template void initialize<T>(Array<T>&, const InitSpec&, Rng&);                                            \
    template std::size_t param_count<T>(const std::vector<Parameter<T>>&);                                    \
    template std::size_t param_count<T>(const ParameterStore<T>&);                                            \
    template ConvLayer<T> make_conv<T>(ParameterStore<T>&, Rng&, const std::string&, std::size_t, std::size_t, \
                                       std::size_t, const Conv1dOptions&, bool);                              \
    template BatchNormLayer<T> make_batch_norm<T>(ParameterStore<T>&, const std::string&, std::size_t);

HTMD_INSTANTIATE(float)
HTMD_INSTANTIATE(double)
#undef HTMD_INSTANTIATE

}  // namespace htmd::diff
