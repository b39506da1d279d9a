#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "htmd/bss_eval.hpp"

namespace htmd::metrics {

struct EvalConfig {
    double seg_seconds = 1.0;
    std::size_t filter_len = 512;
    std::size_t pes_frame = 4096;
    double pes_floor_db = -100.0;
    double vad_frame_seconds = 0.02;
    double vad_threshold_db = -60.0;
    double silent_threshold_db = -100.0;  // segment reference energy below this: metrics undefined
    double near_silent_fraction = 0.5;    // segments with less reference activity count as silent in splits
};

struct PesResult {
    std::optional<double> mean_db;  // undefined when no reference frame is silent
    std::vector<double> frame_db;   // one value per silent reference frame
    std::vector<std::size_t> frame_index;
};

// Reference frames whose mean-square energy in dB is below the floor are silent; each
// contributes max(10*log10(mean(estimate^2)), floor), so an all-zero frame lands on the floor. Partial tail frames are dropped.
PesResult pes(std::span<const double> estimate, std::span<const double> reference, std::size_t frame_len = 4096,
              double floor_db = -100.0);

std::size_t vad_frame_length(std::size_t sample_rate, double frame_seconds = 0.02);

// Frame active when its RMS in dBFS is at or above the threshold. Partial tail frames are dropped.
std::vector<bool> vad_labels(std::span<const double> signal, std::size_t sample_rate, double frame_seconds = 0.02,
                             double threshold_db = -60.0);
double vad_accuracy(const std::vector<bool>& estimate, const std::vector<bool>& reference);

struct SegmentScores {
    std::string song_id;
    std::size_t segment = 0;
    std::optional<double> sdr, sir, sar;
    bool is_silent = false;
    bool near_silent = false;
    std::vector<double> pes_frames;       // PES frames starting inside this segment
    std::vector<bool> vad_frame_correct;  // per 20 ms frame
    double vad_correct = 0.0;             // fraction in [0, 1]
};

// Non-overlapping segments; a partial tail segment is dropped.
std::vector<SegmentScores> segment_metrics(const std::string& song_id, std::span<const double> vocals,
                                           std::span<const double> accompaniment, std::span<const double> estimate,
                                           std::size_t sample_rate, const EvalConfig& cfg = {});

struct MetricSummary {
    double song_median = 0.0;
    double segment_median = 0.0;
    double segment_mean = 0.0;  // finite values only
    std::size_t defined = 0;
    std::size_t pos_inf = 0;
    std::size_t neg_inf = 0;
};

struct MetricReport {
    MetricSummary sdr, sir, sar;
    std::optional<double> pes_mean_db;
    std::size_t pes_frames = 0;
    double vad_percent = 0.0;
    std::size_t vad_frames = 0;
    std::size_t songs = 0;
    std::size_t segments = 0;
    std::size_t silent_segments = 0;
    std::size_t near_silent_segments = 0;
};

double median(std::vector<double> values);

MetricReport aggregate(const std::vector<SegmentScores>& segments);

}  // namespace htmd::metrics
