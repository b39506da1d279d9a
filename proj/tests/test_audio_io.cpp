#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "htmd/audio_io.hpp"

using namespace htmd;
using namespace htmd::audio;
namespace fs = std::filesystem;

namespace {

void write_raw_pcm16(const fs::path& path, const std::vector<std::int16_t>& samples, std::uint16_t bits = 16,
                     std::uint16_t format = 1) {
    std::ofstream os(path, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
    const auto bytes = static_cast<std::uint32_t>(samples.size() * 2);
    os.write("RIFF", 4);
    u32(36 + bytes);
    os.write("WAVEfmt ", 8);
    u32(16);
    u16(format);
    u16(1);
    u32(22050);
    u32(22050 * 2);
    u16(2);
    u16(bits);
    os.write("data", 4);
    u32(bytes);
    os.write(reinterpret_cast<const char*>(samples.data()), bytes);
}

AudioBuffer sine(double freq, std::size_t rate, std::size_t n, double amp = 1.0) {
    AudioBuffer b;
    b.sample_rate = rate;
    b.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        b.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) /
                                                         static_cast<double>(rate)));
    return b;
}

void make_song(const fs::path& dir, std::size_t n, std::size_t vocal_n = 0) {
    fs::create_directories(dir);
    AudioBuffer b;
    b.sample_rate = 22050;
    b.samples.assign(n, 0.1f);
    write_wav(b, dir / "mixture.wav", WavFormat::pcm16);
    b.samples.assign(vocal_n ? vocal_n : n, 0.05f);
    write_wav(b, dir / "vocals.wav", WavFormat::pcm16);
}

}  // namespace

TEST_SUITE("audio_io") {

TEST_CASE("pcm16 mapping, zero bytes and saturation") {
    const auto dir = fixtures::scratch_dir("wav_basic");
    write_raw_pcm16(dir / "a.wav", {32767, 0, -32768});
    const auto a = load_wav(dir / "a.wav");
    CHECK(a.sample_rate == 22050);
    CHECK(a.channels == 1);
    CHECK(a.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-9));
    CHECK(a.samples[1] == 0.0f);
    CHECK(a.samples[2] == -1.0f);

    AudioBuffer zeros{std::vector<float>(100, 0.0f), 22050, 1, ""};
    write_wav(zeros, dir / "z.wav", WavFormat::pcm16);
    CHECK(fs::file_size(dir / "z.wav") == 44 + 200);
    std::ifstream in(dir / "z.wav", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    CHECK(std::all_of(bytes.begin() + 44, bytes.end(), [](char c) { return c == 0; }));

    AudioBuffer loud{{1.5f, -1.5f}, 22050, 1, ""};
    write_wav(loud, dir / "c.wav", WavFormat::pcm16);
    const auto c = load_wav(dir / "c.wav");
    CHECK(c.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-9));
    CHECK(c.samples[1] == -1.0f);
}

TEST_CASE("round trip error bounds") {
    const auto dir = fixtures::scratch_dir("wav_roundtrip");
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    AudioBuffer b;
    b.sample_rate = 44100;
    b.channels = 2;
    for (int i = 0; i < 4000; ++i) b.samples.push_back(u(gen));
    write_wav(b, dir / "f.wav", WavFormat::float32);
    write_wav(b, dir / "p.wav", WavFormat::pcm16);
    const auto f = load_wav(dir / "f.wav");
    const auto p = load_wav(dir / "p.wav");
    REQUIRE(f.samples.size() == b.samples.size());
    REQUIRE(p.channels == 2);
    double max_pcm = 0.0;
    for (std::size_t i = 0; i < b.samples.size(); ++i) {
        CHECK(f.samples[i] == b.samples[i]);
        max_pcm = std::max(max_pcm, std::abs(static_cast<double>(p.samples[i]) - b.samples[i]));
    }
    CHECK(max_pcm <= 1.0 / 32768.0);
}

TEST_CASE("load errors are distinct") {
    const auto dir = fixtures::scratch_dir("wav_errors");
    auto code_of = [](const fs::path& p) {
        try {
            load_wav(p);
        } catch (const AudioError& e) {
            return e.code();
        }
        return AudioErrorCode::io_failure;
    };
    CHECK(code_of(dir / "missing.wav") == AudioErrorCode::missing_file);
    write_raw_pcm16(dir / "u8.wav", {1, 2}, 8);
    CHECK(code_of(dir / "u8.wav") == AudioErrorCode::unsupported_format);
    write_raw_pcm16(dir / "t.wav", std::vector<std::int16_t>(100, 7));
    fs::resize_file(dir / "t.wav", 44 + 120);
    CHECK(code_of(dir / "t.wav") == AudioErrorCode::truncated);

    AudioBuffer nan{{0.0f, std::nanf("")}, 22050, 1, ""};
    CHECK_THROWS_AS(write_wav(nan, dir / "n.wav"), AudioError);
}

TEST_CASE("to_mono") {
    AudioBuffer st{{0.2f, 0.4f, 1.0f, -1.0f}, 44100, 2, ""};
    const auto m = to_mono(st);
    CHECK(m.channels == 1);
    CHECK(m.sample_rate == 44100);
    CHECK(m.samples[0] == doctest::Approx(0.3));
    CHECK(m.samples[1] == 0.0f);
    CHECK(to_mono(m).samples == m.samples);
    AudioBuffer three{std::vector<float>(6), 44100, 3, ""};
    CHECK_THROWS_AS(to_mono(three), AudioError);
}

TEST_CASE("resample_half passband, stopband and DC") {
    AudioBuffer dc{std::vector<float>(2000, 0.5f), 44100, 1, ""};
    const auto d = resample_half(dc);
    CHECK(d.sample_rate == 22050);
    CHECK(d.samples.size() == 1000);
    for (std::size_t i = 40; i < 960; ++i) CHECK(std::abs(d.samples[i] - 0.5f) <= 1e-3);

    const auto low = resample_half(sine(1000.0, 44100, 8820));
    double max_err = 0.0;
    for (std::size_t m = 100; m + 100 < low.samples.size(); ++m) {
        const double ideal = std::sin(2.0 * std::numbers::pi * 1000.0 * static_cast<double>(2 * m) / 44100.0);
        max_err = std::max(max_err, std::abs(low.samples[m] - ideal));
    }
    CHECK(max_err <= 0.01);

    const auto in_high = sine(15000.0, 44100, 8820);
    const auto high = resample_half(in_high);
    double e_in = 0.0, e_out = 0.0;
    for (std::size_t m = 100; m + 100 < high.samples.size(); ++m) {
        e_out += high.samples[m] * high.samples[m];
        e_in += in_high.samples[2 * m] * in_high.samples[2 * m];
    }
    CHECK(10.0 * std::log10(e_in / e_out) >= 40.0);

    AudioBuffer odd{std::vector<float>(200), 22051, 1, ""};
    CHECK_THROWS_AS(resample_half(odd), AudioError);
    AudioBuffer tiny{std::vector<float>(10), 44100, 1, ""};
    CHECK_THROWS_AS(resample_half(tiny), AudioError);
}

TEST_CASE("index_dataset splits, ordering and errors") {
    const auto root = fixtures::scratch_dir("dataset");
    for (const char* s : {"d_song", "a_song", "c_song", "b_song"}) make_song(root / "train" / s, 64);
    make_song(root / "test" / "t1", 64);
    const auto splits = index_dataset(root, 1);
    REQUIRE(splits.train.entries.size() == 3);
    REQUIRE(splits.valid.entries.size() == 1);
    CHECK(splits.train.entries[0].song_id == "a_song");
    CHECK(splits.valid.entries[0].song_id == "d_song");
    CHECK(splits.test.entries.size() == 1);
    CHECK(splits.train.sample_rate == 22050);
    CHECK(index_dataset(root, 1).valid.entries[0].song_id == "d_song");

    CHECK(default_valid_songs(100) == 25);
    CHECK(default_valid_songs(4) == 1);

    fs::remove(root / "train" / "b_song" / "vocals.wav");
    try {
        index_dataset(root, 1);
        FAIL("expected an error");
    } catch (const DatasetError& e) {
        CHECK(std::string(e.what()).find("b_song") != std::string::npos);
    }
    make_song(root / "train" / "b_song", 64, 60);
    CHECK_THROWS_AS(index_dataset(root, 1), DatasetError);
}

TEST_CASE("hundred songs give a 75/25 split") {
    const auto root = fixtures::scratch_dir("dataset100");
    for (int i = 0; i < 100; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "song%03d", i);
        make_song(root / "train" / name, 8);
    }
    const auto splits = index_dataset(root);
    CHECK(splits.train.entries.size() == 75);
    CHECK(splits.valid.entries.size() == 25);
    CHECK(splits.valid.entries.front().song_id == "song075");
}

TEST_CASE("chunk counts and padding") {
    std::vector<float> x(16384, 1.0f);
    CHECK(chunk(x, ChunkPlan{16384, 16384}).size() == 1);
    const auto half = chunk(x, ChunkPlan{16384, 8192});
    REQUIRE(half.size() == 2);
    CHECK(half[1][8191] == 1.0f);
    CHECK(half[1][8192] == 0.0f);
    std::vector<float> y(20000, 1.0f);
    const auto two = chunk(y, ChunkPlan{16384, 16384});
    REQUIRE(two.size() == 2);
    CHECK(std::count(two[1].begin(), two[1].end(), 0.0f) == 12768);
    CHECK_THROWS_AS(chunk(std::vector<float>{}, ChunkPlan{}), AudioError);
    CHECK_THROWS_AS(chunk(y, ChunkPlan{16, 32}), AudioError);
}

TEST_CASE("overlap_add reconstructs its input") {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> x(5000);
    for (auto& v : x) v = u(gen);
    for (std::size_t hop : {1024u, 512u, 300u}) {
        const ChunkPlan plan{1024, hop};
        const auto y = overlap_add(chunk(x, plan), plan, x.size());
        REQUIRE(y.size() == x.size());
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) <= 1e-6);
    }
    const ChunkPlan plan{64, 64};
    const auto single = overlap_add(chunk(std::span<const float>(x.data(), 40), plan), plan, 40);
    CHECK(single.size() == 40);
    std::vector<std::vector<float>> bad{std::vector<float>(63)};
    CHECK_THROWS_AS(overlap_add(bad, plan, 63), AudioError);
}

}  // TEST_SUITE
