#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "htmd/adam.hpp"
#include "htmd/audio_io.hpp"
#include "htmd/losses.hpp"
#include "htmd/separator.hpp"

namespace htmd::train {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 16;
    std::size_t chunk_len = 16384;
    std::size_t patience = 20;
    std::size_t max_epochs = 200;
    std::size_t steps_per_epoch = 1000;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const LossSpec& s);
void from_json(const nlohmann::json& j, LossSpec& s);

// Mono waveforms at the model sample rate.
struct Song {
    std::string id;
    std::vector<float> mixture;
    std::vector<float> vocals;
};

// Loads, downmixes and (for twice the target rate) halves the sample rate of each song.
std::vector<Song> load_songs(const audio::DatasetIndex& index, std::size_t sample_rate);

struct Batch {
    diff::Array<float> mixture;  // [batch, 1, chunk_len]
    diff::Array<float> vocals;
    std::vector<std::size_t> song;
    std::vector<std::size_t> offset;
    std::vector<bool> padded;  // song shorter than chunk_len, zero-padded
};

// Uniform song, then uniform crop start; identical offsets for mixture and vocals.
Batch sample_batch(const std::vector<Song>& songs, const TrainConfig& cfg, Rng& rng);

// Non-overlapping chunk_len tiling of every song (tail zero-padded), grouped into
// batches of at most batch_size.
std::vector<Batch> validation_batches(const std::vector<Song>& songs, std::size_t chunk_len, std::size_t batch_size);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::vector<double> step_losses;
    std::size_t best_epoch = 0;
    double best_valid_loss = std::numeric_limits<double>::infinity();
    bool stopped_early = false;
};

void to_json(nlohmann::json& j, const TrainHistory& h);
void from_json(const nlohmann::json& j, TrainHistory& h);
std::string history_csv(const TrainHistory& h);

// Patience counter on validation loss.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    // Returns true if `valid_loss` is a new best.
    bool update(double valid_loss);
    bool should_stop() const noexcept { return since_best_ >= patience_; }
    double best() const noexcept { return best_; }
    std::size_t since_best() const noexcept { return since_best_; }
    void restore(double best, std::size_t since_best) { best_ = best; since_best_ = since_best; }

private:
    std::size_t patience_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t since_best_ = 0;
};

// Drives optimization of a float model. The data stream is seeded from
// TrainConfig::seed; model initialization uses its own generator.
class Trainer {
public:
    Trainer(model::Separator<float>& model, LossSpec loss, TrainConfig cfg);

    // One Adam step on `batch`; returns the pre-update loss.
    double step(const Batch& batch);
    // Mean loss over the batches (weighted by batch size), eval mode, no graph.
    double evaluate(const std::vector<Batch>& batches);

    using EpochCallback = std::function<void(const EpochRecord&, bool improved)>;
    // Epoch loop with early stopping. On return the model holds the best weights.
    TrainHistory fit(const std::vector<Song>& train, const std::vector<Song>& valid, const EpochCallback& on_epoch = {});

    Rng& rng() noexcept { return rng_; }
    Adam<float>& optimizer() noexcept { return adam_; }
    model::Separator<float>& model() noexcept { return model_; }
    const LossSpec& loss_spec() const noexcept { return loss_; }
    const TrainConfig& config() const noexcept { return cfg_; }

    // Metadata stored alongside checkpoints (loss spec, train config, data RNG state).
    nlohmann::json state_meta() const;
    void restore_state_meta(const nlohmann::json& meta);

private:
    model::Separator<float>& model_;
    LossSpec loss_;
    TrainConfig cfg_;
    Adam<float> adam_;
    Rng rng_;
};

}  // namespace htmd::train
