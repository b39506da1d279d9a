#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "cli_commands.hpp"
#include "htmd/errors.hpp"

namespace {

int exit_code(htmd::ErrorClass c) {
    switch (c) {
        case htmd::ErrorClass::usage: return 1;
        case htmd::ErrorClass::data: return 2;
        case htmd::ErrorClass::numeric: return 3;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace htmd::cli;
    CLI::App app{"Singing-voice separation: training, separation, evaluation and significance testing"};
    app.require_subcommand(1);

    TrainArgs train;
    std::string preset, loss_preset, l1, l2, data, out_dir;
    double alpha = 0, beta = 0, lr = 0;
    std::size_t batch = 0, patience = 0, seed = 0, steps = 0, epochs = 0, valid_songs = 0;
    auto* t = app.add_subcommand("train", "Train a model on a dataset directory");
    t->add_option("--config", train.config_file, "JSON run config; flags override its values");
    t->add_option("--data", data, "Dataset root with train/ and test/ song folders");
    auto* o_preset = t->add_option("--preset", preset, "Model: htmd, convtasnet, waveunet, tiny-htmd")
                         ->check(CLI::IsMember({"htmd", "convtasnet", "waveunet", "tiny-htmd"}));
    auto* o_loss = t->add_option("--loss", loss_preset, "Loss preset <L2>-<L1>: mse-mse, mae-mae, mae-mse, mse-mae, none-mse, none-mae")
                       ->check(CLI::IsMember({"mse-mse", "mae-mae", "mae-mse", "mse-mae", "none-mse", "none-mae"}));
    auto* o_l1 = t->add_option("--l1", l1, "Final-estimate loss: mse or mae");
    auto* o_l2 = t->add_option("--l2", l2, "Intermediate-estimate loss: mse, mae or none");
    auto* o_alpha = t->add_option("--alpha", alpha, "Weight of the final-estimate loss");
    auto* o_beta = t->add_option("--beta", beta, "Weight of the intermediate-estimate loss");
    auto* o_lr = t->add_option("--lr", lr, "Adam learning rate (default 1e-4)");
    auto* o_batch = t->add_option("--batch", batch, "Batch size (default 16, 8 for convtasnet)");
    auto* o_patience = t->add_option("--patience", patience, "Epochs without validation improvement before stopping (default 20)");
    auto* o_seed = t->add_option("--seed", seed, "Seed for initialization and data sampling");
    auto* o_steps = t->add_option("--steps-per-epoch", steps, "Optimizer steps per epoch (default 1000)");
    auto* o_epochs = t->add_option("--max-epochs", epochs, "Upper bound on epochs (default 200)");
    auto* o_valid = t->add_option("--valid-songs", valid_songs, "Training songs held out for validation (default 25%)");
    auto* o_out = t->add_option("--out", out_dir, "Run directory (default runs/<preset>)");

    SeparateArgs sep;
    auto* s = app.add_subcommand("separate", "Extract vocals from a mixture wav");
    s->add_option("--checkpoint", sep.checkpoint, "Trained checkpoint")->required();
    s->add_option("--input", sep.input, "Mixture wav (mono or stereo)")->required();
    s->add_option("--output", sep.output, "Vocal estimate wav")->required();
    s->add_flag("--emit-intermediate", sep.emit_intermediate, "Also write the masker estimate as <output>_intermediate.wav");
    s->add_flag("--resample", sep.resample, "Halve the sample rate of inputs at twice the model rate");
    s->add_option("--hop", sep.hop, "Chunk hop in samples (default half the model input length)");
    s->add_option("--batch", sep.batch, "Chunks per forward pass");
    s->add_option("--format", sep.format, "Output encoding")->check(CLI::IsMember({"pcm16", "float32"}));

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Score vocal estimates against references");
    e->add_option("--estimates", ev.estimates, "Directory of <song>/vocals.wav or <song>.wav estimates")->required();
    e->add_option("--references", ev.references, "Directory of <song>/{vocals,accompaniment|mixture}.wav")->required();
    e->add_option("--out", ev.out_dir, "Output directory for segments.csv, summary.json, kde.csv")->required();
    e->add_option("--filter-len", ev.filter_len, "Projection filter taps (default 512)");
    e->add_option("--seg-len", ev.seg_seconds, "Segment length in seconds (default 1)");
    e->add_option("--pes-floor", ev.pes_floor, "PES floor and silence threshold in dB (default -100)");
    e->add_option("--vad-threshold", ev.vad_threshold, "VAD activity threshold in dBFS (default -60)");
    e->add_option("--kde-grid", ev.kde_grid, "KDE grid points (default 512)");

    SignificanceArgs sg;
    auto* g = app.add_subcommand("significance", "Paired tests between two per-segment tables");
    g->add_option("--a", sg.table_a, "First segments.csv")->required();
    g->add_option("--b", sg.table_b, "Second segments.csv")->required();
    g->add_option("--alpha", sg.alpha, "Significance level (default 0.01)");
    g->add_option("--out", sg.output, "Write the results as JSON");

    ExportKdeArgs kd;
    double bandwidth = 0;
    auto* k = app.add_subcommand("export-kde", "KDE grid of a segment metric split by silent/non-silent");
    k->add_option("--segments", kd.segments, "segments.csv from evaluate")->required();
    k->add_option("--metric", kd.metric, "sdr, sir or sar")->check(CLI::IsMember({"sdr", "sir", "sar"}));
    k->add_option("--out", kd.output, "Output CSV")->required();
    k->add_option("--grid", kd.grid, "Grid points (default 512)");
    auto* o_bw = k->add_option("--bandwidth", bandwidth, "Fixed bandwidth (default Scott's rule)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (t->parsed()) {
            auto& ov = train.overrides;
            if (*o_preset) ov["preset"] = preset;
            if (*o_loss) ov["loss_preset"] = loss_preset;
            if (*o_l1) ov["loss"]["l1"] = l1;
            if (*o_l2) ov["loss"]["l2"] = l2;
            if (*o_alpha) ov["loss"]["alpha"] = alpha;
            if (*o_beta) ov["loss"]["beta"] = beta;
            if (*o_lr) ov["train"]["learning_rate"] = lr;
            if (*o_batch) ov["train"]["batch_size"] = batch;
            if (*o_patience) ov["train"]["patience"] = patience;
            if (*o_seed) ov["train"]["seed"] = seed;
            if (*o_steps) ov["train"]["steps_per_epoch"] = steps;
            if (*o_epochs) ov["train"]["max_epochs"] = epochs;
            if (*o_valid) ov["valid_songs"] = valid_songs;
            if (!data.empty()) ov["data"] = data;
            if (*o_out) ov["out_dir"] = out_dir;
            return cmd_train(train);
        }
        if (s->parsed()) return cmd_separate(sep);
        if (e->parsed()) return cmd_evaluate(ev);
        if (g->parsed()) return cmd_significance(sg);
        if (k->parsed()) {
            if (*o_bw) kd.bandwidth = bandwidth;
            return cmd_export_kde(kd);
        }
    } catch (const htmd::Error& err) {
        std::cerr << "error: " << err.what() << '\n';
        return exit_code(err.error_class());
    } catch (const std::filesystem::filesystem_error& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    }
    return 1;
}
