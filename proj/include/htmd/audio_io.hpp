#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "htmd/errors.hpp"

namespace htmd::audio {

enum class AudioErrorCode { missing_file, unsupported_format, truncated, io_failure, invalid_argument };

class AudioError : public Error {
public:
    AudioError(AudioErrorCode code, const std::string& what)
        : Error(code == AudioErrorCode::invalid_argument ? ErrorClass::usage : ErrorClass::data, what), code_(code) {}
    AudioErrorCode code() const noexcept { return code_; }

private:
    AudioErrorCode code_;
};

// Interleaved samples in [-1, 1].
struct AudioBuffer {
    std::vector<float> samples;
    std::size_t sample_rate = 0;
    std::size_t channels = 1;
    std::string source;  // originating path, if any

    std::size_t frames() const { return channels ? samples.size() / channels : 0; }
};

enum class WavFormat { pcm16, float32 };

struct WavInfo {
    std::size_t sample_rate = 0;
    std::size_t channels = 0;
    std::size_t frames = 0;
    WavFormat format = WavFormat::pcm16;
};

// Reads PCM-16 or IEEE float-32 RIFF/WAVE with one or two channels. PCM is divided
// by 32768.
AudioBuffer load_wav(const std::filesystem::path& path);
WavInfo read_wav_info(const std::filesystem::path& path);

// PCM-16 output saturates |x| > 1 to full scale (32767 / -32768). NaN/Inf is rejected.
void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path, WavFormat format = WavFormat::float32);

// Per-frame mean over channels; mono passes through unchanged.
AudioBuffer to_mono(const AudioBuffer& buffer);

// Hann-windowed sinc low-pass (cutoff at the output Nyquist frequency, unit DC gain)
// followed by keeping every second frame. `taps` must be odd and >= 64.
AudioBuffer resample_half(const AudioBuffer& buffer, std::size_t taps = 65);
std::vector<double> halfband_lowpass(std::size_t taps);

enum class Split { train, valid, test };

struct DatasetEntry {
    std::string song_id;
    std::filesystem::path mixture_path;
    std::filesystem::path vocals_path;
};

struct DatasetIndex {
    Split split = Split::train;
    std::vector<DatasetEntry> entries;
    std::size_t sample_rate = 0;
};

struct DatasetSplits {
    DatasetIndex train;
    DatasetIndex valid;
    DatasetIndex test;
};

// Default validation share: 25 of every 100 training songs, rounded.
std::size_t default_valid_songs(std::size_t train_songs);

// Layout root/{train,test}/<song>/{mixture.wav,vocals.wav}. Songs are ordered
// lexicographically; the last `valid_songs` training songs form the validation split.
DatasetSplits index_dataset(const std::filesystem::path& root, std::optional<std::size_t> valid_songs = std::nullopt);

struct ChunkPlan {
    std::size_t chunk_len = 16384;
    std::size_t hop = 16384;

    void validate() const;
};

// Frames start every `hop` samples while the start lies inside the signal; the tail
// is zero-padded to a full frame. Count = ceil(len / hop).
std::vector<std::vector<float>> chunk(std::span<const float> signal, const ChunkPlan& plan);
std::vector<std::vector<float>> chunk(const AudioBuffer& mono, const ChunkPlan& plan);

// Weighted overlap-add normalized by the summed weights: triangular weights when
// hop < chunk_len, plain concatenation when hop == chunk_len. Truncated to original_len.
std::vector<float> overlap_add(const std::vector<std::vector<float>>& frames, const ChunkPlan& plan,
                               std::size_t original_len);
AudioBuffer overlap_add(const std::vector<std::vector<float>>& frames, const ChunkPlan& plan, std::size_t original_len,
                        std::size_t sample_rate);

}  // namespace htmd::audio
