#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace htmd::metrics {

struct SignificanceResult {
    std::string test;    // "wilcoxon" | "mcnemar"
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_effective = 0;
    std::string method;  // "exact" | "approximate" | "degenerate"

    bool significant(double alpha = 0.01) const { return p_value < alpha; }
};

inline constexpr std::size_t kExactLimit = 25;

// Paired two-sided signed-rank test. Zero differences are dropped, ties get midranks,
// statistic W = min(W+, W-). Exact null distribution for n_effective <= 25, normal
// approximation with tie-corrected variance and continuity correction above.
SignificanceResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

// Discordant counts: b = A correct only, c = B correct only. Exact binomial for
// b + c <= 25, continuity-corrected chi-square above.
SignificanceResult mcnemar(const std::vector<std::pair<bool, bool>>& paired);
SignificanceResult mcnemar_counts(std::size_t b, std::size_t c);

}  // namespace htmd::metrics
