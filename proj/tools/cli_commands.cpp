#include "cli_commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "htmd/audio_io.hpp"
#include "htmd/checkpoint.hpp"
#include "htmd/errors.hpp"
#include "htmd/evaluation.hpp"
#include "htmd/inference.hpp"
#include "htmd/kde.hpp"
#include "htmd/report_io.hpp"
#include "htmd/trainer.hpp"

namespace htmd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) { train::write_file_atomic(path, text); }

std::string display(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

}  // namespace

json expand_train_config(const TrainArgs& args) {
    const json file = args.config_file.empty() ? json::object() : read_json_file(args.config_file);
    json layered = file;
    layered.merge_patch(args.overrides);

    const std::string preset = layered.value("preset", std::string("htmd"));
    const model::ModelConfig model_cfg = model::ModelConfig::preset(preset);
    const bool baseline = !model_cfg.has_intermediate();

    train::TrainConfig train_cfg;
    if (model_cfg.architecture == model::Architecture::conv_tasnet) train_cfg.batch_size = 8;

    json cfg = {{"preset", preset},
                {"data", nullptr},
                {"valid_songs", nullptr},
                {"out_dir", "runs/" + preset},
                {"model", model_cfg},
                {"loss_preset", baseline ? "none-mse" : "mse-mse"},
                {"train", train_cfg}};
    // Explicit loss fields refine the loss preset; a preset given on the command line
    // discards weights and a model block coming from the file.
    json lower = file;
    if (args.overrides.contains("preset") && lower.value("preset", preset) != preset) lower.erase("model");
    if (args.overrides.contains("loss_preset")) lower.erase("loss");
    cfg.merge_patch(lower);
    cfg.merge_patch(args.overrides);

    train::LossSpec loss;
    if (cfg.contains("loss_preset") && !cfg["loss_preset"].is_null()) {
        loss = train::LossSpec::preset(cfg["loss_preset"].get<std::string>());
        if (cfg.contains("loss")) {
            json merged = json(loss);
            merged.merge_patch(cfg["loss"]);
            loss = merged.get<train::LossSpec>();
        }
    } else {
        loss = cfg.value("loss", json::object()).get<train::LossSpec>();
    }
    if (baseline && loss.beta > 0.0)
        throw ConfigError(preset + " has no intermediate estimate; beta must be 0 (use none-mse or none-mae)");
    loss.validate();
    cfg["loss"] = loss;

    model::ModelConfig full = cfg["model"].get<model::ModelConfig>();
    full.validate();
    cfg["model"] = full;
    train::TrainConfig tc = cfg["train"].get<train::TrainConfig>();
    if (!cfg["train"].contains("chunk_len")) tc.chunk_len = full.input_length;
    tc.validate();
    cfg["train"] = tc;
    return cfg;
}

int cmd_train(const TrainArgs& args) {
    const json cfg = expand_train_config(args);
    if (cfg["data"].is_null()) throw ConfigError("no dataset root given (--data)");
    const fs::path root = cfg["data"].get<std::string>();
    if (!fs::is_directory(root)) throw ConfigError("dataset root " + root.string() + " does not exist");

    const model::ModelConfig model_cfg = cfg["model"].get<model::ModelConfig>();
    const train::LossSpec loss = cfg["loss"].get<train::LossSpec>();
    const train::TrainConfig tc = cfg["train"].get<train::TrainConfig>();
    std::optional<std::size_t> valid_songs;
    if (!cfg["valid_songs"].is_null()) valid_songs = cfg["valid_songs"].get<std::size_t>();

    const fs::path out = cfg["out_dir"].get<std::string>();
    fs::create_directories(out);
    write_text(out / "config.json", cfg.dump(2) + "\n");

    const auto splits = audio::index_dataset(root, valid_songs);
    std::cerr << "train songs: " << splits.train.entries.size() << ", validation songs: " << splits.valid.entries.size()
              << '\n';
    const auto train_songs = train::load_songs(splits.train, model_cfg.sample_rate);
    const auto valid_songs_data = train::load_songs(splits.valid, model_cfg.sample_rate);

    Rng init_rng(tc.seed);
    model::Separator<float> model(model_cfg, init_rng);
    std::cerr << model::to_string(model_cfg.architecture) << ": " << model.param_count() << " parameters\n";
    train::Trainer trainer(model, loss, tc);
    train::TrainHistory history = trainer.fit(train_songs, valid_songs_data, [&](const train::EpochRecord& r, bool best) {
        std::cerr << "epoch " << r.epoch << " train " << r.train_loss << " valid " << r.valid_loss
                  << (best ? " *" : "") << '\n';
    });

    json meta = trainer.state_meta();
    meta["history"] = history;
    train::save_checkpoint(out / "best.ckpt", model, &trainer.optimizer(), meta);
    write_text(out / "history.csv", train::history_csv(history));
    std::cerr << "best epoch " << history.best_epoch << ", validation loss " << history.best_valid_loss << '\n';
    return 0;
}

int cmd_separate(const SeparateArgs& args) {
    auto loaded = train::load_checkpoint(args.checkpoint);
    auto& model = *loaded.model;
    const std::size_t rate = model.config().sample_rate;

    audio::AudioBuffer input = audio::to_mono(audio::load_wav(args.input));
    if (input.sample_rate != rate) {
        if (!args.resample || input.sample_rate != 2 * rate)
            throw DatasetError("input is " + std::to_string(input.sample_rate) + " Hz but the model expects " +
                               std::to_string(rate) + " Hz" +
                               (input.sample_rate == 2 * rate ? " (pass --resample)" : ""));
        input = audio::resample_half(input);
    }
    const audio::WavFormat format = args.format == "pcm16" ? audio::WavFormat::pcm16 : audio::WavFormat::float32;
    const auto result = model::separate(model, input.samples, args.hop, args.batch);
    for (float v : result.vocals)
        if (!std::isfinite(v)) throw NumericFault("model produced non-finite output");

    audio::AudioBuffer out{result.vocals, rate, 1, args.input};
    const fs::path out_path = args.output;
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    audio::write_wav(out, out_path, format);
    if (args.emit_intermediate) {
        if (result.intermediate.empty())
            throw ConfigError(model::to_string(model.config().architecture) + " has no intermediate estimate");
        fs::path mid = out_path;
        mid.replace_filename(out_path.stem().string() + "_intermediate" + out_path.extension().string());
        audio::write_wav({result.intermediate, rate, 1, args.input}, mid, format);
    }
    return 0;
}

namespace {

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

std::vector<double> load_mono(const fs::path& path, std::size_t rate) {
    audio::AudioBuffer buf = audio::to_mono(audio::load_wav(path));
    if (rate && buf.sample_rate == 2 * rate) buf = audio::resample_half(buf);
    if (rate && buf.sample_rate != rate)
        throw DatasetError(path.string() + " is " + std::to_string(buf.sample_rate) + " Hz, expected " +
                           std::to_string(rate) + " Hz");
    return widen(buf.samples);
}

fs::path find_estimate(const fs::path& dir, const std::string& song) {
    for (const fs::path& p : {dir / song / "vocals.wav", dir / (song + ".wav")})
        if (fs::exists(p)) return p;
    return {};
}

}  // namespace

int cmd_evaluate(const EvaluateArgs& args) {
    const fs::path refs = args.references, ests = args.estimates;
    if (!fs::is_directory(refs)) throw DatasetError("reference directory " + refs.string() + " does not exist");
    if (!fs::is_directory(ests)) throw DatasetError("estimate directory " + ests.string() + " does not exist");

    std::vector<std::string> songs;
    for (const auto& e : fs::directory_iterator(refs))
        if (e.is_directory()) songs.push_back(e.path().filename().string());
    std::sort(songs.begin(), songs.end());
    if (songs.empty()) throw DatasetError("reference directory " + refs.string() + " contains no songs");

    metrics::EvalConfig ec;
    ec.filter_len = args.filter_len;
    ec.seg_seconds = args.seg_seconds;
    ec.pes_floor_db = args.pes_floor;
    ec.vad_threshold_db = args.vad_threshold;

    std::vector<metrics::SegmentScores> table;
    std::vector<std::string> unpaired;
    for (const auto& song : songs) {
        const fs::path est_path = find_estimate(ests, song);
        const fs::path voc_path = refs / song / "vocals.wav";
        if (est_path.empty() || !fs::exists(voc_path)) {
            std::cerr << "skipping unpaired song '" << song << "'\n";
            unpaired.push_back(song);
            continue;
        }
        const audio::WavInfo est_info = audio::read_wav_info(est_path);
        const std::size_t rate = est_info.sample_rate;
        auto est = load_mono(est_path, rate);
        auto voc = load_mono(voc_path, rate);
        std::vector<double> acc;
        if (fs::exists(refs / song / "accompaniment.wav")) {
            acc = load_mono(refs / song / "accompaniment.wav", rate);
        } else if (fs::exists(refs / song / "mixture.wav")) {
            acc = load_mono(refs / song / "mixture.wav", rate);
            if (acc.size() != voc.size()) throw DatasetError("song '" + song + "': mixture and vocals lengths differ");
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] -= voc[i];
        } else {
            throw DatasetError("song '" + song + "' has neither accompaniment.wav nor mixture.wav");
        }
        const std::size_t n = std::min({est.size(), voc.size(), acc.size()});
        if (n != est.size() || n != voc.size() || n != acc.size())
            std::cerr << "song '" << song << "': lengths differ, truncating to " << n << " samples\n";
        est.resize(n);
        voc.resize(n);
        acc.resize(n);
        auto segs = metrics::segment_metrics(song, voc, acc, est, rate, ec);
        table.insert(table.end(), segs.begin(), segs.end());
    }
    if (table.empty()) throw DatasetError("no paired songs to evaluate");

    const metrics::MetricReport report = metrics::aggregate(table);
    const fs::path out = args.out_dir;
    fs::create_directories(out);
    write_text(out / "segments.csv", metrics::segments_csv(table));
    json summary = metrics::report_json(report);
    summary["unpaired_songs"] = unpaired;
    summary["unpaired_count"] = unpaired.size();
    summary["config"] = {{"filter_len", ec.filter_len},     {"seg_seconds", ec.seg_seconds},
                         {"pes_frame", ec.pes_frame},       {"pes_floor_db", ec.pes_floor_db},
                         {"vad_frame_seconds", ec.vad_frame_seconds}, {"vad_threshold_db", ec.vad_threshold_db},
                         {"silent_threshold_db", ec.silent_threshold_db}};
    write_text(out / "summary.json", summary.dump(2) + "\n");

    std::vector<double> sdr;
    std::vector<bool> split;
    for (const auto& s : table)
        if (s.sdr && std::isfinite(*s.sdr)) {
            sdr.push_back(*s.sdr);
            split.push_back(s.near_silent);
        }
    if (sdr.size() >= 2)
        write_text(out / "kde.csv", metrics::kde_csv(metrics::kde_export(sdr, split, std::nullopt, args.kde_grid)));
    else
        std::cerr << "fewer than two finite SDR values; kde.csv not written\n";

    std::cout << "songs " << report.songs << " (unpaired " << unpaired.size() << "), segments " << report.segments
              << '\n'
              << "SDR song-median " << display(report.sdr.song_median) << "  segment median/mean "
              << display(report.sdr.segment_median) << '/' << display(report.sdr.segment_mean) << '\n'
              << "SIR song-median " << display(report.sir.song_median) << "  SAR song-median "
              << display(report.sar.song_median) << '\n'
              << "PES " << (report.pes_mean_db ? display(*report.pes_mean_db) : std::string("n/a")) << " dB  VAD "
              << display(report.vad_percent) << "%\n";
    return 0;
}

int cmd_significance(const SignificanceArgs& args) {
    const auto a = metrics::read_segments_csv(args.table_a);
    const auto b = metrics::read_segments_csv(args.table_b);
    const auto results = metrics::compare_tables(a, b);
    const json report = metrics::comparisons_json(results, args.alpha);
    if (!args.output.empty()) write_text(args.output, report.dump(2) + "\n");
    for (const auto& c : results)
        std::cout << std::left << std::setw(4) << c.metric << ' ' << std::setw(9) << c.result.test << " p="
                  << std::setprecision(6) << c.result.p_value << " n=" << c.result.n_effective << ' '
                  << c.result.method << (c.result.significant(args.alpha) ? " significant" : "") << '\n';
    return 0;
}

int cmd_export_kde(const ExportKdeArgs& args) {
    const auto table = metrics::read_segments_csv(args.segments);
    std::optional<double> metrics::SegmentScores::*field = nullptr;
    if (args.metric == "sdr") field = &metrics::SegmentScores::sdr;
    else if (args.metric == "sir") field = &metrics::SegmentScores::sir;
    else if (args.metric == "sar") field = &metrics::SegmentScores::sar;
    else throw ConfigError("unknown metric '" + args.metric + "' (sdr, sir or sar)");
    std::vector<double> values;
    std::vector<bool> split;
    for (const auto& s : table)
        if (s.*field) {
            values.push_back(*(s.*field));
            split.push_back(s.near_silent);
        }
    const auto kde = metrics::kde_export(values, split, args.bandwidth, args.grid);
    if (kde.degenerate) std::cerr << "zero spread: using a narrow fallback bandwidth\n";
    write_text(args.output, metrics::kde_csv(kde));
    return 0;
}

}  // namespace htmd::cli
