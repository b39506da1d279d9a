#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

namespace htmd::model {

// Encoder / dilated-TCN mask estimator / decoder hyperparameters.
struct MaskerConfig {
    std::size_t n_filters = 512;        // latent channels N
    std::size_t kernel_len = 16;        // encoder/decoder kernel L (samples)
    std::size_t stride = 8;             // L / 2
    std::size_t bottleneck = 128;       // B
    std::size_t conv_channels = 512;    // H
    std::size_t skip_channels = 128;    // Sc
    std::size_t kernel = 3;             // depthwise kernel P
    std::size_t blocks_per_repeat = 10; // X, dilations 2^0 .. 2^(X-1)
    std::size_t repeats = 1;            // R
    double leaky_slope = 0.3;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    void validate() const;

    static MaskerConfig htmd();        // R = 1, X = 10
    static MaskerConfig conv_tasnet(); // R = 3, X = 9
};

enum class BottleneckKind { recurrent, convolutional };

// Multi-resolution encoder/decoder with skip connections.
struct DenoiserConfig {
    std::size_t depth = 12;
    std::size_t growth = 12;       // channels added per level
    std::size_t kernel_down = 15;
    std::size_t kernel_up = 5;
    BottleneckKind bottleneck = BottleneckKind::recurrent;
    std::size_t lstm_layers = 2;
    // Hidden units per direction. 84 gives 168-wide bidirectional layers.
    std::size_t lstm_hidden = 84;
    double leaky_slope = 0.3;

    void validate() const;
    std::size_t level_channels(std::size_t level) const { return growth * level; }

    static DenoiserConfig htmd();      // growth 12, recurrent bottleneck
    static DenoiserConfig wave_u_net(); // growth 24, convolutional bottleneck
};

enum class Architecture { htmd, conv_tasnet, wave_u_net };

std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);

struct ModelConfig {
    Architecture architecture = Architecture::htmd;
    MaskerConfig masker = MaskerConfig::htmd();
    DenoiserConfig denoiser = DenoiserConfig::htmd();
    std::size_t input_length = 16384;
    std::size_t sample_rate = 22050;

    bool uses_masker() const { return architecture != Architecture::wave_u_net; }
    bool uses_denoiser() const { return architecture != Architecture::conv_tasnet; }
    bool has_intermediate() const { return architecture == Architecture::htmd; }

    void validate() const;

    // "htmd", "convtasnet", "waveunet", or "tiny-htmd" (small debug network).
    static ModelConfig preset(const std::string& name);
};

// Receptive field of the mask estimator in input samples.
std::size_t receptive_field(const MaskerConfig& cfg);

void to_json(nlohmann::json& j, const MaskerConfig& c);
void from_json(const nlohmann::json& j, MaskerConfig& c);
void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace htmd::model
