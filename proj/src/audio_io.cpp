#include "htmd/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

namespace htmd::audio {

namespace fs = std::filesystem;

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct ParsedWav {
    WavInfo info;
    std::streamoff data_offset = 0;
    std::uint32_t data_bytes = 0;
};

ParsedWav parse_header(std::ifstream& in, const fs::path& path) {
    const std::string where = " in " + path.string();
    std::array<unsigned char, 12> riff{};
    if (!in.read(reinterpret_cast<char*>(riff.data()), riff.size()))
        throw AudioError(AudioErrorCode::truncated, "file too short for a RIFF header" + where);
    if (std::memcmp(riff.data(), "RIFF", 4) != 0 || std::memcmp(riff.data() + 8, "WAVE", 4) != 0)
        throw AudioError(AudioErrorCode::unsupported_format, "not a RIFF/WAVE file" + where);

    ParsedWav parsed;
    bool have_fmt = false;
    std::uint16_t format = 0, bits = 0;
    while (true) {
        std::array<unsigned char, 8> header{};
        if (!in.read(reinterpret_cast<char*>(header.data()), header.size()))
            throw AudioError(AudioErrorCode::truncated, "missing data chunk" + where);
        const std::uint32_t size = read_u32(header.data() + 4);
        if (std::memcmp(header.data(), "fmt ", 4) == 0) {
            if (size < 16) throw AudioError(AudioErrorCode::unsupported_format, "fmt chunk too small" + where);
            std::vector<unsigned char> fmt(size);
            if (!in.read(reinterpret_cast<char*>(fmt.data()), size))
                throw AudioError(AudioErrorCode::truncated, "truncated fmt chunk" + where);
            format = read_u16(fmt.data());
            parsed.info.channels = read_u16(fmt.data() + 2);
            parsed.info.sample_rate = read_u32(fmt.data() + 4);
            bits = read_u16(fmt.data() + 14);
            if (format == kFormatExtensible && size >= 26) format = read_u16(fmt.data() + 24);
            have_fmt = true;
        } else if (std::memcmp(header.data(), "data", 4) == 0) {
            if (!have_fmt) throw AudioError(AudioErrorCode::unsupported_format, "data chunk before fmt chunk" + where);
            parsed.data_offset = in.tellg();
            parsed.data_bytes = size;
            break;
        } else {
            in.seekg(size + (size & 1u), std::ios::cur);
            if (!in) throw AudioError(AudioErrorCode::truncated, "truncated chunk list" + where);
        }
        if (size & 1u) in.seekg(1, std::ios::cur);
    }

    if (format == kFormatPcm && bits == 16)
        parsed.info.format = WavFormat::pcm16;
    else if (format == kFormatFloat && bits == 32)
        parsed.info.format = WavFormat::float32;
    else
        throw AudioError(AudioErrorCode::unsupported_format, "unsupported codec (format " + std::to_string(format) +
                                                                 ", " + std::to_string(bits) + " bits)" + where);
    if (parsed.info.channels < 1 || parsed.info.channels > 2)
        throw AudioError(AudioErrorCode::unsupported_format,
                         std::to_string(parsed.info.channels) + " channels not supported" + where);
    if (parsed.info.sample_rate == 0)
        throw AudioError(AudioErrorCode::unsupported_format, "zero sample rate" + where);

    const std::size_t frame_bytes = parsed.info.channels * (bits / 8);
    in.seekg(0, std::ios::end);
    const auto file_end = static_cast<std::streamoff>(in.tellg());
    if (file_end - parsed.data_offset < static_cast<std::streamoff>(parsed.data_bytes) ||
        parsed.data_bytes % frame_bytes != 0)
        throw AudioError(AudioErrorCode::truncated, "truncated data chunk (" + std::to_string(parsed.data_bytes) +
                                                        " bytes declared)" + where);
    parsed.info.frames = parsed.data_bytes / frame_bytes;
    return parsed;
}

std::ifstream open_input(const fs::path& path) {
    if (!fs::exists(path)) throw AudioError(AudioErrorCode::missing_file, "no such file: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AudioError(AudioErrorCode::io_failure, "cannot open " + path.string());
    return in;
}

}  // namespace

WavInfo read_wav_info(const fs::path& path) {
    auto in = open_input(path);
    return parse_header(in, path).info;
}

AudioBuffer load_wav(const fs::path& path) {
    auto in = open_input(path);
    const ParsedWav parsed = parse_header(in, path);
    std::vector<unsigned char> raw(parsed.data_bytes);
    in.seekg(parsed.data_offset);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw AudioError(AudioErrorCode::truncated, "truncated data chunk in " + path.string());

    AudioBuffer buf;
    buf.sample_rate = parsed.info.sample_rate;
    buf.channels = parsed.info.channels;
    buf.source = path.string();
    const std::size_t count = parsed.info.frames * parsed.info.channels;
    buf.samples.resize(count);
    if (parsed.info.format == WavFormat::pcm16) {
        for (std::size_t i = 0; i < count; ++i) {
            const auto v = static_cast<std::int16_t>(read_u16(raw.data() + 2 * i));
            buf.samples[i] = static_cast<float>(v) / 32768.0f;
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t bitsv = read_u32(raw.data() + 4 * i);
            float v;
            std::memcpy(&v, &bitsv, sizeof v);
            buf.samples[i] = v;
        }
    }
    return buf;
}

void write_wav(const AudioBuffer& buffer, const fs::path& path, WavFormat format) {
    if (buffer.samples.empty()) throw AudioError(AudioErrorCode::invalid_argument, "refusing to write an empty buffer");
    if (buffer.channels < 1 || buffer.channels > 2 || buffer.samples.size() % buffer.channels != 0)
        throw AudioError(AudioErrorCode::invalid_argument, "buffer channel layout is inconsistent");
    if (buffer.sample_rate == 0) throw AudioError(AudioErrorCode::invalid_argument, "sample rate must be positive");
    for (float v : buffer.samples)
        if (!std::isfinite(v)) throw AudioError(AudioErrorCode::invalid_argument, "non-finite sample in buffer");

    const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
    const std::uint16_t tag = format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat;
    const auto channels = static_cast<std::uint16_t>(buffer.channels);
    const auto data_bytes = static_cast<std::uint32_t>(buffer.samples.size() * (bits / 8));

    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, tag);
    put_u16(out, channels);
    put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate * channels * (bits / 8)));
    put_u16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
    put_u16(out, bits);
    out += "data";
    put_u32(out, data_bytes);
    if (format == WavFormat::pcm16) {
        for (float v : buffer.samples) {
            const double scaled = std::round(static_cast<double>(v) * 32768.0);
            const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
            put_u16(out, static_cast<std::uint16_t>(q));
        }
    } else {
        for (float v : buffer.samples) {
            std::uint32_t bitsv;
            std::memcpy(&bitsv, &v, sizeof v);
            put_u32(out, bitsv);
        }
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw AudioError(AudioErrorCode::io_failure, "cannot open " + path.string() + " for writing");
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw AudioError(AudioErrorCode::io_failure, "write failed for " + path.string());
}

AudioBuffer to_mono(const AudioBuffer& buffer) {
    if (buffer.channels == 1) return buffer;
    if (buffer.channels != 2)
        throw AudioError(AudioErrorCode::invalid_argument,
                         "to_mono supports 1 or 2 channels, got " + std::to_string(buffer.channels));
    AudioBuffer out;
    out.sample_rate = buffer.sample_rate;
    out.channels = 1;
    out.source = buffer.source;
    out.samples.resize(buffer.frames());
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] = 0.5f * (buffer.samples[2 * i] + buffer.samples[2 * i + 1]);
    return out;
}

std::vector<double> halfband_lowpass(std::size_t taps) {
    if (taps < 64 || taps % 2 == 0)
        throw AudioError(AudioErrorCode::invalid_argument, "resampler needs an odd tap count >= 64");
    const double cutoff = 0.25;  // cycles per input sample: the output Nyquist frequency
    const double center = static_cast<double>(taps - 1) / 2.0;
    std::vector<double> h(taps);
    double total = 0.0;
    for (std::size_t n = 0; n < taps; ++n) {
        const double x = static_cast<double>(n) - center;
        const double sinc = x == 0.0 ? 1.0 : std::sin(2.0 * std::numbers::pi * cutoff * x) / (2.0 * std::numbers::pi * cutoff * x);
        const double window = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(taps - 1));
        h[n] = 2.0 * cutoff * sinc * window;
        total += h[n];
    }
    for (auto& v : h) v /= total;
    return h;
}

AudioBuffer resample_half(const AudioBuffer& buffer, std::size_t taps) {
    if (buffer.sample_rate == 0 || buffer.sample_rate % 2 != 0)
        throw AudioError(AudioErrorCode::invalid_argument,
                         "resample_half needs an even sample rate, got " + std::to_string(buffer.sample_rate));
    const auto h = halfband_lowpass(taps);
    const std::size_t frames = buffer.frames();
    if (frames < taps)
        throw AudioError(AudioErrorCode::invalid_argument, "buffer of " + std::to_string(frames) +
                                                               " frames is shorter than the " + std::to_string(taps) +
                                                               "-tap filter");
    const std::size_t ch = buffer.channels;
    const std::size_t out_frames = (frames + 1) / 2;
    const auto half = static_cast<std::ptrdiff_t>(taps / 2);
    AudioBuffer out;
    out.sample_rate = buffer.sample_rate / 2;
    out.channels = ch;
    out.source = buffer.source;
    out.samples.resize(out_frames * ch);
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t m = 0; m < out_frames; ++m) {
            const auto centre = static_cast<std::ptrdiff_t>(2 * m);
            double acc = 0.0;
            for (std::size_t k = 0; k < taps; ++k) {
                const std::ptrdiff_t idx = centre + static_cast<std::ptrdiff_t>(k) - half;
                if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(frames)) continue;
                acc += h[k] * buffer.samples[static_cast<std::size_t>(idx) * ch + c];
            }
            out.samples[m * ch + c] = static_cast<float>(acc);
        }
    return out;
}

std::size_t default_valid_songs(std::size_t train_songs) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(train_songs) * 0.25));
}

namespace {

DatasetIndex index_split(const fs::path& dir, Split split) {
    DatasetIndex index;
    index.split = split;
    if (!fs::is_directory(dir)) return index;
    std::vector<std::string> songs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) songs.push_back(e.path().filename().string());
    std::sort(songs.begin(), songs.end());
    for (const auto& song : songs) {
        const fs::path mix = dir / song / "mixture.wav";
        const fs::path voc = dir / song / "vocals.wav";
        for (const auto& p : {mix, voc})
            if (!fs::exists(p))
                throw DatasetError("song '" + song + "' is missing " + p.filename().string() + " (" + p.string() + ")");
        const WavInfo mi = read_wav_info(mix);
        const WavInfo vi = read_wav_info(voc);
        if (mi.frames != vi.frames || mi.sample_rate != vi.sample_rate)
            throw DatasetError("song '" + song + "': mixture (" + std::to_string(mi.frames) + " frames @ " +
                               std::to_string(mi.sample_rate) + " Hz) and vocals (" + std::to_string(vi.frames) +
                               " frames @ " + std::to_string(vi.sample_rate) + " Hz) differ");
        if (index.sample_rate == 0)
            index.sample_rate = mi.sample_rate;
        else if (index.sample_rate != mi.sample_rate)
            throw DatasetError("song '" + song + "' has sample rate " + std::to_string(mi.sample_rate) +
                               ", expected " + std::to_string(index.sample_rate));
        index.entries.push_back({song, mix, voc});
    }
    return index;
}

}  // namespace

DatasetSplits index_dataset(const fs::path& root, std::optional<std::size_t> valid_songs) {
    if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " is not a directory");
    DatasetSplits splits;
    DatasetIndex all = index_split(root / "train", Split::train);
    splits.test = index_split(root / "test", Split::test);
    const std::size_t n_valid = valid_songs.value_or(default_valid_songs(all.entries.size()));
    if (n_valid > all.entries.size())
        throw DatasetError("cannot hold out " + std::to_string(n_valid) + " validation songs from " +
                           std::to_string(all.entries.size()));
    const std::size_t n_train = all.entries.size() - n_valid;
    splits.train.split = Split::train;
    splits.valid.split = Split::valid;
    splits.train.sample_rate = splits.valid.sample_rate = all.sample_rate;
    splits.train.entries.assign(all.entries.begin(), all.entries.begin() + static_cast<std::ptrdiff_t>(n_train));
    splits.valid.entries.assign(all.entries.begin() + static_cast<std::ptrdiff_t>(n_train), all.entries.end());
    return splits;
}

void ChunkPlan::validate() const {
    if (chunk_len == 0 || hop == 0 || hop > chunk_len)
        throw AudioError(AudioErrorCode::invalid_argument, "chunk plan needs 0 < hop <= chunk_len");
}

std::vector<std::vector<float>> chunk(std::span<const float> signal, const ChunkPlan& plan) {
    plan.validate();
    if (signal.empty()) throw AudioError(AudioErrorCode::invalid_argument, "cannot chunk an empty buffer");
    std::vector<std::vector<float>> frames;
    for (std::size_t start = 0; start < signal.size(); start += plan.hop) {
        std::vector<float> frame(plan.chunk_len, 0.0f);
        const std::size_t n = std::min(plan.chunk_len, signal.size() - start);
        std::copy_n(signal.begin() + static_cast<std::ptrdiff_t>(start), n, frame.begin());
        frames.push_back(std::move(frame));
    }
    return frames;
}

std::vector<std::vector<float>> chunk(const AudioBuffer& mono, const ChunkPlan& plan) {
    if (mono.channels != 1) throw AudioError(AudioErrorCode::invalid_argument, "chunk expects a mono buffer");
    return chunk(std::span<const float>(mono.samples), plan);
}

std::vector<float> overlap_add(const std::vector<std::vector<float>>& frames, const ChunkPlan& plan,
                               std::size_t original_len) {
    plan.validate();
    std::vector<double> weight(plan.chunk_len, 1.0);
    if (plan.hop < plan.chunk_len) {
        // Symmetric triangle, strictly positive so every covered sample is recoverable.
        const double half = static_cast<double>(plan.chunk_len) / 2.0;
        for (std::size_t t = 0; t < plan.chunk_len; ++t) {
            const double pos = static_cast<double>(t) + 0.5;
            weight[t] = std::min(pos, static_cast<double>(plan.chunk_len) - pos) / half;
        }
    }
    const std::size_t total = frames.empty() ? 0 : (frames.size() - 1) * plan.hop + plan.chunk_len;
    std::vector<double> acc(total, 0.0), norm(total, 0.0);
    for (std::size_t f = 0; f < frames.size(); ++f) {
        if (frames[f].size() != plan.chunk_len)
            throw AudioError(AudioErrorCode::invalid_argument, "frame " + std::to_string(f) + " has length " +
                                                                   std::to_string(frames[f].size()) + ", expected " +
                                                                   std::to_string(plan.chunk_len));
        const std::size_t start = f * plan.hop;
        for (std::size_t t = 0; t < plan.chunk_len; ++t) {
            acc[start + t] += weight[t] * frames[f][t];
            norm[start + t] += weight[t];
        }
    }
    std::vector<float> out(original_len, 0.0f);
    for (std::size_t i = 0; i < std::min(original_len, total); ++i)
        out[i] = norm[i] > 0.0 ? static_cast<float>(acc[i] / norm[i]) : 0.0f;
    return out;
}

AudioBuffer overlap_add(const std::vector<std::vector<float>>& frames, const ChunkPlan& plan, std::size_t original_len,
                        std::size_t sample_rate) {
    AudioBuffer out;
    out.samples = overlap_add(frames, plan, original_len);
    out.sample_rate = sample_rate;
    out.channels = 1;
    return out;
}

}  // namespace htmd::audio
