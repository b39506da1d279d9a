#include "htmd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "htmd/errors.hpp"

namespace htmd::train {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0 || chunk_len == 0 || patience == 0 || max_epochs == 0 || steps_per_epoch == 0)
        throw ConfigError("batch size, chunk length, patience, max epochs and steps per epoch must be positive");
}

void to_json(json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},       {"chunk_len", c.chunk_len},
         {"patience", c.patience},           {"max_epochs", c.max_epochs},       {"steps_per_epoch", c.steps_per_epoch},
         {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.chunk_len = j.value("chunk_len", c.chunk_len);
    c.patience = j.value("patience", c.patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
    c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const LossSpec& s) {
    j = {{"l1", to_string(s.l1)}, {"l2", to_string(s.l2)}, {"alpha", s.alpha}, {"beta", s.beta}};
}

void from_json(const json& j, LossSpec& s) {
    s.l1 = loss_kind_from_string(j.value("l1", to_string(s.l1)));
    s.l2 = loss_kind_from_string(j.value("l2", to_string(s.l2)));
    s.alpha = j.value("alpha", s.alpha);
    s.beta = j.value("beta", s.beta);
}

std::vector<Song> load_songs(const audio::DatasetIndex& index, std::size_t sample_rate) {
    std::vector<Song> songs;
    for (const auto& e : index.entries) {
        auto prepare = [&](const std::filesystem::path& p) {
            audio::AudioBuffer buf = audio::to_mono(audio::load_wav(p));
            if (buf.sample_rate == 2 * sample_rate) buf = audio::resample_half(buf);
            if (buf.sample_rate != sample_rate)
                throw DatasetError("song '" + e.song_id + "': " + std::to_string(buf.sample_rate) +
                                   " Hz cannot be brought to " + std::to_string(sample_rate) + " Hz");
            return std::move(buf.samples);
        };
        Song s{e.song_id, prepare(e.mixture_path), prepare(e.vocals_path)};
        if (s.mixture.size() != s.vocals.size())
            throw DatasetError("song '" + e.song_id + "': mixture and vocals lengths differ");
        songs.push_back(std::move(s));
    }
    return songs;
}

Batch sample_batch(const std::vector<Song>& songs, const TrainConfig& cfg, Rng& rng) {
    if (songs.empty()) throw DatasetError("cannot sample from an empty song list");
    const std::size_t B = cfg.batch_size, L = cfg.chunk_len;
    Batch batch;
    batch.mixture = diff::Array<float>({B, 1, L});
    batch.vocals = diff::Array<float>({B, 1, L});
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t s = rng.index(songs.size());
        const Song& song = songs[s];
        const std::size_t len = song.mixture.size();
        const bool short_song = len < L;
        const std::size_t offset = short_song ? 0 : rng.index(len - L + 1);
        const std::size_t n = std::min(L, len - offset);
        std::copy_n(song.mixture.begin() + static_cast<std::ptrdiff_t>(offset), n, batch.mixture.data() + b * L);
        std::copy_n(song.vocals.begin() + static_cast<std::ptrdiff_t>(offset), n, batch.vocals.data() + b * L);
        batch.song.push_back(s);
        batch.offset.push_back(offset);
        batch.padded.push_back(short_song);
    }
    return batch;
}

std::vector<Batch> validation_batches(const std::vector<Song>& songs, std::size_t chunk_len, std::size_t batch_size) {
    struct Piece {
        std::size_t song, offset;
        std::vector<float> mix, voc;
    };
    std::vector<Piece> pieces;
    const audio::ChunkPlan plan{chunk_len, chunk_len};
    for (std::size_t s = 0; s < songs.size(); ++s) {
        if (songs[s].mixture.empty()) continue;
        auto mix = audio::chunk(std::span<const float>(songs[s].mixture), plan);
        auto voc = audio::chunk(std::span<const float>(songs[s].vocals), plan);
        for (std::size_t k = 0; k < mix.size(); ++k)
            pieces.push_back({s, k * chunk_len, std::move(mix[k]), std::move(voc[k])});
    }
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < pieces.size(); start += batch_size) {
        const std::size_t B = std::min(batch_size, pieces.size() - start);
        Batch b;
        b.mixture = diff::Array<float>({B, 1, chunk_len});
        b.vocals = diff::Array<float>({B, 1, chunk_len});
        for (std::size_t i = 0; i < B; ++i) {
            const Piece& p = pieces[start + i];
            std::copy(p.mix.begin(), p.mix.end(), b.mixture.data() + i * chunk_len);
            std::copy(p.voc.begin(), p.voc.end(), b.vocals.data() + i * chunk_len);
            b.song.push_back(p.song);
            b.offset.push_back(p.offset);
            b.padded.push_back(p.offset + chunk_len > songs[p.song].mixture.size());
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

void to_json(json& j, const TrainHistory& h) {
    json epochs = json::array();
    for (const auto& e : h.epochs)
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_loss", e.valid_loss}});
    j = {{"epochs", epochs},
         {"best_epoch", h.best_epoch},
         {"best_valid_loss", std::isfinite(h.best_valid_loss) ? json(h.best_valid_loss) : json(nullptr)},
         {"stopped_early", h.stopped_early},
         {"steps", h.step_losses.size()}};
}

void from_json(const json& j, TrainHistory& h) {
    h.epochs.clear();
    for (const auto& e : j.at("epochs"))
        h.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                            e.at("valid_loss").get<double>()});
    h.best_epoch = j.value("best_epoch", std::size_t{0});
    const json& best = j.at("best_valid_loss");
    h.best_valid_loss = best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
    h.stopped_early = j.value("stopped_early", false);
}

std::string history_csv(const TrainHistory& h) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,valid_loss\n";
    for (const auto& e : h.epochs) os << e.epoch << ',' << e.train_loss << ',' << e.valid_loss << '\n';
    return os.str();
}

bool EarlyStopping::update(double valid_loss) {
    if (valid_loss < best_) {
        best_ = valid_loss;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

Trainer::Trainer(model::Separator<float>& model, LossSpec loss, TrainConfig cfg)
    : model_(model), loss_(loss), cfg_(cfg), rng_(cfg.seed ^ 0x5eedda7aULL) {
    loss_.validate();
    cfg_.validate();
    if (model_.config().has_intermediate() == false && loss_.beta > 0.0)
        throw ConfigError(model::to_string(model_.config().architecture) +
                          " has no intermediate estimate; use a loss preset with beta = 0");
    if (cfg_.chunk_len != model_.config().input_length)
        throw ConfigError("chunk length " + std::to_string(cfg_.chunk_len) + " differs from model input length " +
                          std::to_string(model_.config().input_length));
    adam_.config().learning_rate = cfg_.learning_rate;
}

double Trainer::step(const Batch& batch) {
    model_.set_training(true);
    model_.parameters().zero_grad();
    const diff::Tensor<float> x(batch.mixture);
    const diff::Tensor<float> y(batch.vocals);
    auto out = model_.forward(x);
    auto total = deep_loss(y, out.final_estimate, out.intermediate, loss_);
    const double value = total.value()[0];
    if (!std::isfinite(value))
        throw NumericFault("non-finite training loss at step " + std::to_string(adam_.steps() + 1));
    diff::backward(total);
    adam_.step(model_.parameters().entries());
    return value;
}

double Trainer::evaluate(const std::vector<Batch>& batches) {
    if (batches.empty()) throw DatasetError("no validation chunks");
    model_.set_training(false);
    diff::NoGradGuard guard;
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& b : batches) {
        const diff::Tensor<float> x(b.mixture);
        const diff::Tensor<float> y(b.vocals);
        auto out = model_.forward(x);
        const double value = deep_loss(y, out.final_estimate, out.intermediate, loss_).value()[0];
        const std::size_t n = b.mixture.dim(0);
        acc += value * static_cast<double>(n);
        count += n;
    }
    model_.set_training(true);
    const double mean = acc / static_cast<double>(count);
    if (!std::isfinite(mean)) throw NumericFault("non-finite validation loss");
    return mean;
}

TrainHistory Trainer::fit(const std::vector<Song>& train, const std::vector<Song>& valid, const EpochCallback& on_epoch) {
    if (train.empty()) throw DatasetError("training split is empty");
    const auto valid_batches = validation_batches(valid, cfg_.chunk_len, cfg_.batch_size);
    if (valid_batches.empty()) throw DatasetError("validation split is empty");

    TrainHistory history;
    EarlyStopping stopper(cfg_.patience);
    std::vector<diff::Array<float>> best_weights;
    for (std::size_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
        double acc = 0.0;
        for (std::size_t s = 0; s < cfg_.steps_per_epoch; ++s) {
            const double l = step(sample_batch(train, cfg_, rng_));
            history.step_losses.push_back(l);
            acc += l;
        }
        EpochRecord rec{epoch, acc / static_cast<double>(cfg_.steps_per_epoch), evaluate(valid_batches)};
        history.epochs.push_back(rec);
        const bool improved = stopper.update(rec.valid_loss);
        if (improved) {
            history.best_epoch = epoch;
            history.best_valid_loss = rec.valid_loss;
            best_weights.clear();
            for (const auto& p : model_.parameters().entries()) best_weights.push_back(p.tensor.value());
        }
        if (on_epoch) on_epoch(rec, improved);
        if (stopper.should_stop()) {
            history.stopped_early = epoch < cfg_.max_epochs;
            break;
        }
    }
    auto& entries = model_.parameters().entries();
    for (std::size_t i = 0; i < best_weights.size(); ++i) entries[i].tensor.value() = best_weights[i];
    return history;
}

json Trainer::state_meta() const {
    return {{"loss", loss_}, {"train", cfg_}, {"rng_state", rng_.state()}};
}

void Trainer::restore_state_meta(const json& meta) {
    if (meta.contains("rng_state")) rng_.set_state(meta.at("rng_state").get<std::string>());
}

}  // namespace htmd::train
