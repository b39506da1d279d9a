#include "htmd/kde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "htmd/errors.hpp"

namespace htmd::metrics {

namespace {

double fallback_bandwidth(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    return 1e-3 * std::abs(mean) + 1e-6;
}

// Returns the bandwidth, flagging zero spread.
double choose_bandwidth(const std::vector<double>& v, std::optional<double> fixed, bool& degenerate) {
    if (fixed) {
        if (!(*fixed > 0.0)) throw ConfigError("KDE bandwidth must be positive");
        return *fixed;
    }
    const double h = v.size() >= 2 ? scott_bandwidth(v) : 0.0;
    if (h > 0.0 && std::isfinite(h)) return h;
    degenerate = true;
    return fallback_bandwidth(v);
}

std::vector<double> density(const std::vector<double>& v, double h, const std::vector<double>& grid) {
    std::vector<double> y(grid.size(), 0.0);
    if (v.empty()) return y;
    const double norm = 1.0 / (static_cast<double>(v.size()) * h * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double acc = 0.0;
        for (double x : v) {
            const double u = (grid[i] - x) / h;
            acc += std::exp(-0.5 * u * u);
        }
        y[i] = acc * norm;
    }
    const double area = trapezoid(grid, y);
    if (area > 0.0)
        for (auto& val : y) val /= area;
    return y;
}

}  // namespace

double scott_bandwidth(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return std::pow(static_cast<double>(n), -0.2) * sd;
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double area = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return area;
}

KdeTable kde_export(const std::vector<double>& values, const std::vector<bool>& silent, std::optional<double> bandwidth,
                    std::size_t grid) {
    if (values.size() != silent.size()) throw ShapeError("kde_export: values and labels differ in length");
    if (grid < 2) throw ConfigError("kde_export: grid needs at least 2 points");
    KdeTable t;
    std::vector<double> all, sil, non;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            ++t.dropped;
            continue;
        }
        all.push_back(values[i]);
        (silent[i] ? sil : non).push_back(values[i]);
    }
    if (all.size() < 2) throw ShapeError("kde_export: needs at least 2 finite values");
    t.n_silent = sil.size();
    t.n_nonsilent = non.size();

    t.bandwidth = choose_bandwidth(all, bandwidth, t.degenerate);
    bool sub_degenerate = false;
    const double h_sil = sil.empty() ? t.bandwidth : choose_bandwidth(sil, bandwidth, sub_degenerate);
    const double h_non = non.empty() ? t.bandwidth : choose_bandwidth(non, bandwidth, sub_degenerate);
    const double reach = 3.0 * std::max({t.bandwidth, h_sil, h_non});
    const auto [lo_it, hi_it] = std::minmax_element(all.begin(), all.end());
    const double lo = *lo_it - reach, hi = *hi_it + reach;
    t.x.resize(grid);
    for (std::size_t i = 0; i < grid; ++i) t.x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid - 1);
    t.overall = density(all, t.bandwidth, t.x);
    t.silent = density(sil, h_sil, t.x);
    t.nonsilent = density(non, h_non, t.x);
    return t;
}

std::string kde_csv(const KdeTable& table) {
    std::ostringstream os;
    os.precision(10);
    os << "x,overall,silent,nonsilent\n";
    for (std::size_t i = 0; i < table.x.size(); ++i)
        os << table.x[i] << ',' << table.overall[i] << ',' << table.silent[i] << ',' << table.nonsilent[i] << '\n';
    return os.str();
}

}  // namespace htmd::metrics
