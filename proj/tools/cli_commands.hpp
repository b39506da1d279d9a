#pragma once

#include <optional>
#include <string>

#include <json.hpp>

namespace htmd::cli {

struct TrainArgs {
    std::string config_file;
    nlohmann::json overrides = nlohmann::json::object();  // flags given on the command line
};

struct SeparateArgs {
    std::string checkpoint;
    std::string input;
    std::string output;
    bool emit_intermediate = false;
    bool resample = false;
    std::size_t hop = 0;
    std::size_t batch = 8;
    std::string format = "float32";
};

struct EvaluateArgs {
    std::string estimates;
    std::string references;
    std::string out_dir;
    std::size_t filter_len = 512;
    double seg_seconds = 1.0;
    double pes_floor = -100.0;
    double vad_threshold = -60.0;
    std::size_t kde_grid = 512;
};

struct SignificanceArgs {
    std::string table_a;
    std::string table_b;
    double alpha = 0.01;
    std::string output;
};

struct ExportKdeArgs {
    std::string segments;
    std::string metric = "sdr";
    std::string output;
    std::size_t grid = 512;
    std::optional<double> bandwidth;
};

// Builds the fully expanded training configuration: preset defaults, then the
// config file, then command-line overrides.
nlohmann::json expand_train_config(const TrainArgs& args);

int cmd_train(const TrainArgs& args);
int cmd_separate(const SeparateArgs& args);
int cmd_evaluate(const EvaluateArgs& args);
int cmd_significance(const SignificanceArgs& args);
int cmd_export_kde(const ExportKdeArgs& args);

}  // namespace htmd::cli
