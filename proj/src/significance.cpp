#include "htmd/significance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "htmd/errors.hpp"

namespace htmd::metrics {

SignificanceResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("wilcoxon: paired samples differ in length");
    if (a.empty()) throw ShapeError("wilcoxon: no pairs");
    SignificanceResult r;
    r.test = "wilcoxon";

    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] == b[i] ? 0.0 : a[i] - b[i];
        if (std::isnan(diff)) throw NumericFault("wilcoxon: NaN difference at pair " + std::to_string(i));
        if (diff != 0.0) d.push_back(diff);
    }
    const std::size_t n = d.size();
    r.n_effective = n;
    if (n == 0) {
        r.method = "degenerate";
        return r;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
    // Doubled midranks stay integral.
    std::vector<std::size_t> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const std::size_t doubled = (i + 1) + (j + 1);
        for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    std::size_t wplus2 = 0, total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (d[i] > 0) wplus2 += rank2[i];
    }
    const std::size_t w2 = std::min(wplus2, total2 - wplus2);
    r.statistic = static_cast<double>(w2) / 2.0;

    if (n <= kExactLimit) {
        r.method = "exact";
        std::vector<double> ways(total2 + 1, 0.0);
        ways[0] = 1.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t s = total2; s + 1 > rank2[i]; --s) ways[s] += ways[s - rank2[i]];
        double tail = 0.0;
        for (std::size_t s = 0; s <= total2; ++s)
            if (std::min(s, total2 - s) <= w2) tail += ways[s];
        r.p_value = std::min(1.0, tail / std::ldexp(1.0, static_cast<int>(n)));
        return r;
    }

    r.method = "approximate";
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double wplus = static_cast<double>(wplus2) / 2.0;
    const double z = std::max(0.0, std::abs(wplus - mean) - 0.5) / std::sqrt(var);
    r.p_value = std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
    return r;
}

SignificanceResult mcnemar_counts(std::size_t b, std::size_t c) {
    SignificanceResult r;
    r.test = "mcnemar";
    const std::size_t n = b + c;
    r.n_effective = n;
    if (n == 0) {
        r.method = "degenerate";
        return r;
    }
    if (n <= kExactLimit) {
        r.method = "exact";
        const std::size_t k = std::min(b, c);
        r.statistic = static_cast<double>(k);
        double tail = 0.0, coef = 1.0;  // C(n, i)
        for (std::size_t i = 0; i <= k; ++i) {
            tail += coef;
            coef = coef * static_cast<double>(n - i) / static_cast<double>(i + 1);
        }
        r.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
        return r;
    }
    r.method = "approximate";
    const double diff = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
    const double chi2 = std::max(0.0, diff) * std::max(0.0, diff) / static_cast<double>(n);
    r.statistic = chi2;
    r.p_value = std::clamp(std::erfc(std::sqrt(chi2 / 2.0)), 0.0, 1.0);
    return r;
}

SignificanceResult mcnemar(const std::vector<std::pair<bool, bool>>& paired) {
    if (paired.empty()) throw ShapeError("mcnemar: no pairs");
    std::size_t b = 0, c = 0;
    for (const auto& [a_ok, b_ok] : paired) {
        b += a_ok && !b_ok;
        c += b_ok && !a_ok;
    }
    return mcnemar_counts(b, c);
}

}  // namespace htmd::metrics
