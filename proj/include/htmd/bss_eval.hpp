#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace htmd::metrics {

struct BssDecomposition {
    std::vector<double> s_target;
    std::vector<double> e_interf;
    std::vector<double> e_artif;
};

// Values in dB. +inf when the denominator vanishes relative to the numerator, -inf
// when the numerator is zero; all undefined when the reference vocals are silent.
struct BssResult {
    std::optional<double> sdr;
    std::optional<double> sir;
    std::optional<double> sar;
    std::optional<BssDecomposition> parts;

    bool defined() const noexcept { return sdr.has_value(); }
};

// Projections use delays 0 .. filter_len-1 of each reference, truncated to the
// signal length (samples shifted past the end are dropped).
BssResult bss_eval(std::span<const double> vocals, std::span<const double> accompaniment,
                   std::span<const double> estimate, std::size_t filter_len = 512, bool keep_parts = false);

// 10*log10(num/den) with the sentinel rules above.
double ratio_db(double num, double den);

}  // namespace htmd::metrics
