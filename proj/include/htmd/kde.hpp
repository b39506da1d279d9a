#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace htmd::metrics {

struct KdeTable {
    std::vector<double> x;
    std::vector<double> overall;
    std::vector<double> silent;     // all zero when the population is empty
    std::vector<double> nonsilent;
    double bandwidth = 0.0;         // bandwidth of the overall curve
    bool degenerate = false;        // zero spread: narrow fallback bandwidth used
    std::size_t n_silent = 0;
    std::size_t n_nonsilent = 0;
    std::size_t dropped = 0;        // non-finite inputs excluded
};

// Scott's rule n^(-1/5) * sample standard deviation.
double scott_bandwidth(const std::vector<double>& values);

// Gaussian KDE of all values and of the silent / non-silent subsets on a shared grid
// spanning [min - 3h, max + 3h]. Each curve is normalized to unit trapezoid area.
KdeTable kde_export(const std::vector<double>& values, const std::vector<bool>& silent,
                    std::optional<double> bandwidth = std::nullopt, std::size_t grid = 512);

double trapezoid(const std::vector<double>& x, const std::vector<double>& y);

std::string kde_csv(const KdeTable& table);

}  // namespace htmd::metrics
