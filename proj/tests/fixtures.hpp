#pragma once

// Synthetic signals shared by the unit tests and the acceptance runner.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

struct Mixture {
    std::vector<float> vocals;
    std::vector<float> accompaniment;
    std::vector<float> mixture;
};

// 220 Hz tone bursts with raised-cosine edges over low-passed noise.
inline Mixture tone_burst_mixture(std::size_t length = 16384, std::size_t sample_rate = 22050,
                                  std::uint64_t seed = 7) {
    Mixture m;
    m.vocals.resize(length);
    m.accompaniment.resize(length);
    m.mixture.resize(length);
    const std::size_t ramp = 256;
    const std::size_t bursts[][2] = {{length / 16, length * 7 / 16}, {length * 9 / 16, length * 15 / 16}};
    for (std::size_t t = 0; t < length; ++t) {
        double env = 0.0;
        for (const auto& b : bursts) {
            if (t < b[0] || t >= b[1]) continue;
            const double in = static_cast<double>(t - b[0]), out = static_cast<double>(b[1] - 1 - t);
            const double edge = std::min({in, out, static_cast<double>(ramp)}) / static_cast<double>(ramp);
            env = 0.5 - 0.5 * std::cos(std::numbers::pi * edge);
        }
        m.vocals[t] = static_cast<float>(
            0.5 * env * std::sin(2.0 * std::numbers::pi * 220.0 * static_cast<double>(t) / static_cast<double>(sample_rate)));
    }
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double state = 0.0;
    for (std::size_t t = 0; t < length; ++t) {
        state = 0.9 * state + 0.1 * normal(gen);
        m.accompaniment[t] = static_cast<float>(0.5 * state);
    }
    for (std::size_t t = 0; t < length; ++t) m.mixture[t] = m.vocals[t] + m.accompaniment[t];
    return m;
}

inline std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("htmd_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
