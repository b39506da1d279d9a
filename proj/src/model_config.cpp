#include "htmd/model_config.hpp"

#include "htmd/errors.hpp"

namespace htmd::model {

namespace {
void check(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}
}  // namespace

void MaskerConfig::validate() const {
    check(n_filters > 0 && bottleneck > 0 && conv_channels > 0 && skip_channels > 0,
          "masker channel counts must be positive");
    check(kernel_len > 0 && stride > 0 && kernel_len % stride == 0, "masker stride must divide kernel_len");
    check(kernel >= 1, "masker depthwise kernel must be positive");
    check(blocks_per_repeat >= 1 && repeats >= 1, "masker needs at least one block and one repeat");
    check(bn_momentum > 0.0 && bn_momentum <= 1.0, "batch-norm momentum must be in (0, 1]");
    check(bn_eps > 0.0, "batch-norm eps must be positive");
}

MaskerConfig MaskerConfig::htmd() { return MaskerConfig{}; }

MaskerConfig MaskerConfig::conv_tasnet() {
    MaskerConfig c;
    c.blocks_per_repeat = 9;
    c.repeats = 3;
    return c;
}

void DenoiserConfig::validate() const {
    check(depth >= 1 && growth >= 1, "denoiser depth and growth must be positive");
    check(kernel_down >= 1 && kernel_up >= 1, "denoiser kernels must be positive");
    if (bottleneck == BottleneckKind::recurrent)
        check(lstm_layers >= 1 && lstm_hidden >= 1, "recurrent bottleneck needs layers and hidden units");
}

DenoiserConfig DenoiserConfig::htmd() { return DenoiserConfig{}; }

DenoiserConfig DenoiserConfig::wave_u_net() {
    DenoiserConfig c;
    c.growth = 24;
    c.bottleneck = BottleneckKind::convolutional;
    return c;
}

std::string to_string(Architecture arch) {
    switch (arch) {
        case Architecture::htmd: return "htmd";
        case Architecture::conv_tasnet: return "convtasnet";
        case Architecture::wave_u_net: return "waveunet";
    }
    return "unknown";
}

Architecture architecture_from_string(const std::string& name) {
    if (name == "htmd") return Architecture::htmd;
    if (name == "convtasnet") return Architecture::conv_tasnet;
    if (name == "waveunet") return Architecture::wave_u_net;
    throw ConfigError("unknown architecture '" + name + "' (expected htmd, convtasnet or waveunet)");
}

void ModelConfig::validate() const {
    if (uses_masker()) {
        masker.validate();
        check(input_length >= masker.kernel_len, "input length shorter than one encoder frame");
    }
    if (uses_denoiser()) {
        denoiser.validate();
        check(input_length % (std::size_t{1} << denoiser.depth) == 0,
              "input length must be divisible by 2^depth = " + std::to_string(std::size_t{1} << denoiser.depth));
    }
    check(sample_rate > 0, "sample rate must be positive");
}

ModelConfig ModelConfig::preset(const std::string& name) {
    ModelConfig c;
    if (name == "htmd") return c;
    if (name == "convtasnet") {
        c.architecture = Architecture::conv_tasnet;
        c.masker = MaskerConfig::conv_tasnet();
        return c;
    }
    if (name == "waveunet") {
        c.architecture = Architecture::wave_u_net;
        c.denoiser = DenoiserConfig::wave_u_net();
        return c;
    }
    if (name == "tiny-htmd") {
        c.masker.n_filters = 16;
        c.masker.bottleneck = 16;
        c.masker.conv_channels = 32;
        c.masker.skip_channels = 16;
        c.masker.blocks_per_repeat = 3;
        c.denoiser.depth = 4;
        c.denoiser.growth = 8;
        c.denoiser.lstm_hidden = 8;
        return c;
    }
    throw ConfigError("unknown model preset '" + name + "' (expected htmd, convtasnet, waveunet or tiny-htmd)");
}

std::size_t receptive_field(const MaskerConfig& cfg) {
    std::size_t per_repeat = 0;
    for (std::size_t i = 0; i < cfg.blocks_per_repeat; ++i) per_repeat += (cfg.kernel - 1) << i;
    const std::size_t frames = 1 + cfg.repeats * per_repeat;
    return (frames - 1) * cfg.stride + cfg.kernel_len;
}

void to_json(nlohmann::json& j, const MaskerConfig& c) {
    j = {{"n_filters", c.n_filters},         {"kernel_len", c.kernel_len},
         {"stride", c.stride},               {"bottleneck", c.bottleneck},
         {"conv_channels", c.conv_channels}, {"skip_channels", c.skip_channels},
         {"kernel", c.kernel},               {"blocks_per_repeat", c.blocks_per_repeat},
         {"repeats", c.repeats},             {"leaky_slope", c.leaky_slope},
         {"bn_momentum", c.bn_momentum},     {"bn_eps", c.bn_eps}};
}

void from_json(const nlohmann::json& j, MaskerConfig& c) {
    MaskerConfig d;
    c.n_filters = j.value("n_filters", d.n_filters);
    c.kernel_len = j.value("kernel_len", d.kernel_len);
    c.stride = j.value("stride", d.stride);
    c.bottleneck = j.value("bottleneck", d.bottleneck);
    c.conv_channels = j.value("conv_channels", d.conv_channels);
    c.skip_channels = j.value("skip_channels", d.skip_channels);
    c.kernel = j.value("kernel", d.kernel);
    c.blocks_per_repeat = j.value("blocks_per_repeat", d.blocks_per_repeat);
    c.repeats = j.value("repeats", d.repeats);
    c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
    c.bn_momentum = j.value("bn_momentum", d.bn_momentum);
    c.bn_eps = j.value("bn_eps", d.bn_eps);
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
    j = {{"depth", c.depth},
         {"growth", c.growth},
         {"kernel_down", c.kernel_down},
         {"kernel_up", c.kernel_up},
         {"bottleneck", c.bottleneck == BottleneckKind::recurrent ? "recurrent" : "convolutional"},
         {"lstm_layers", c.lstm_layers},
         {"lstm_hidden", c.lstm_hidden},
         {"leaky_slope", c.leaky_slope}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
    DenoiserConfig d;
    c.depth = j.value("depth", d.depth);
    c.growth = j.value("growth", d.growth);
    c.kernel_down = j.value("kernel_down", d.kernel_down);
    c.kernel_up = j.value("kernel_up", d.kernel_up);
    const std::string kind = j.value("bottleneck", std::string("recurrent"));
    if (kind == "recurrent")
        c.bottleneck = BottleneckKind::recurrent;
    else if (kind == "convolutional")
        c.bottleneck = BottleneckKind::convolutional;
    else
        throw ConfigError("unknown denoiser bottleneck '" + kind + "'");
    c.lstm_layers = j.value("lstm_layers", d.lstm_layers);
    c.lstm_hidden = j.value("lstm_hidden", d.lstm_hidden);
    c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"architecture", to_string(c.architecture)},
         {"input_length", c.input_length},
         {"sample_rate", c.sample_rate}};
    if (c.uses_masker()) j["masker"] = c.masker;
    if (c.uses_denoiser()) j["denoiser"] = c.denoiser;
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c = ModelConfig::preset(j.value("architecture", std::string("htmd")));
    c.input_length = j.value("input_length", c.input_length);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    if (j.contains("masker")) c.masker = j.at("masker").get<MaskerConfig>();
    if (j.contains("denoiser")) c.denoiser = j.at("denoiser").get<DenoiserConfig>();
}

}  // namespace htmd::model
