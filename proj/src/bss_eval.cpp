#include "htmd/bss_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "htmd/errors.hpp"

namespace htmd::metrics {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// G[a][b] = sum_t x(t - a) y(t - b) over t in [0, T), with out-of-range samples zero.
Matrix delayed_gram(std::span<const double> x, std::span<const double> y, std::size_t L) {
    const std::size_t T = x.size();
    Matrix G(L, L);
    for (std::size_t b = 0; b < L; ++b) {
        double acc = 0.0;
        for (std::size_t t = b; t < T; ++t) acc += x[t] * y[t - b];
        G(0, b) = acc;
    }
    for (std::size_t a = 1; a < L; ++a) {
        double acc = 0.0;
        for (std::size_t t = a; t < T; ++t) acc += x[t - a] * y[t];
        G(a, 0) = acc;
    }
    for (std::size_t a = 1; a < L; ++a)
        for (std::size_t b = 1; b < L; ++b) {
            const double drop = (T >= a && T >= b) ? x[T - a] * y[T - b] : 0.0;
            G(a, b) = G(a - 1, b - 1) - drop;
        }
    return G;
}

Vector delayed_correlation(std::span<const double> x, std::span<const double> e, std::size_t L) {
    const std::size_t T = x.size();
    Vector r(L);
    for (std::size_t a = 0; a < L; ++a) {
        double acc = 0.0;
        for (std::size_t t = a; t < T; ++t) acc += x[t - a] * e[t];
        r(a) = acc;
    }
    return r;
}

Vector ridge_solve(Matrix G, const Vector& b) {
    // 1e-10 absolute, shrunk for very quiet references so it stays below 1e-10 relative
    const double ridge = 1e-10 * std::min(1.0, G.trace() / static_cast<double>(G.rows()));
    G.diagonal().array() += ridge > 0.0 ? ridge : 1e-300;
    Eigen::LLT<Matrix> llt(G);
    if (llt.info() == Eigen::Success) return llt.solve(b);
    return G.ldlt().solve(b);
}

void synthesize(std::span<const double> x, const Vector& coef, std::vector<double>& out) {
    const std::size_t T = x.size();
    for (Eigen::Index a = 0; a < coef.size(); ++a) {
        const double c = coef(a);
        for (std::size_t t = static_cast<std::size_t>(a); t < T; ++t) out[t] += c * x[t - static_cast<std::size_t>(a)];
    }
}

double energy(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

}  // namespace

double ratio_db(double num, double den) {
    if (num == 0.0) return -std::numeric_limits<double>::infinity();
    if (den < 1e-12 * num) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(num / den);
}

BssResult bss_eval(std::span<const double> vocals, std::span<const double> accompaniment,
                   std::span<const double> estimate, std::size_t filter_len, bool keep_parts) {
    const std::size_t T = estimate.size();
    if (vocals.size() != T || accompaniment.size() != T)
        throw ShapeError("bss_eval: signal lengths differ (" + std::to_string(vocals.size()) + ", " +
                         std::to_string(accompaniment.size()) + ", " + std::to_string(T) + ")");
    if (filter_len == 0 || filter_len > T) throw ConfigError("bss_eval: filter length must be in [1, signal length]");

    BssResult result;
    bool silent = true;
    for (double v : vocals)
        if (v != 0.0) {
            silent = false;
            break;
        }
    if (silent) return result;

    const std::size_t L = filter_len;
    const Matrix Gvv = delayed_gram(vocals, vocals, L);
    const Vector bv = delayed_correlation(vocals, estimate, L);

    std::vector<double> s_target(T, 0.0);
    synthesize(vocals, ridge_solve(Gvv, bv), s_target);

    Matrix G(2 * L, 2 * L);
    G.topLeftCorner(L, L) = Gvv;
    G.topRightCorner(L, L) = delayed_gram(vocals, accompaniment, L);
    G.bottomLeftCorner(L, L) = G.topRightCorner(L, L).transpose();
    G.bottomRightCorner(L, L) = delayed_gram(accompaniment, accompaniment, L);
    Vector b(2 * L);
    b << bv, delayed_correlation(accompaniment, estimate, L);
    const Vector c = ridge_solve(G, b);

    std::vector<double> projection(T, 0.0);
    synthesize(vocals, c.head(L), projection);
    synthesize(accompaniment, c.tail(L), projection);

    BssDecomposition parts;
    parts.s_target = s_target;
    parts.e_interf.resize(T);
    parts.e_artif.resize(T);
    std::vector<double> distortion(T), target_interf(T);
    for (std::size_t t = 0; t < T; ++t) {
        parts.e_interf[t] = projection[t] - s_target[t];
        parts.e_artif[t] = estimate[t] - projection[t];
        distortion[t] = estimate[t] - s_target[t];
        target_interf[t] = projection[t];
    }
    const double e_target = energy(s_target);
    result.sdr = ratio_db(e_target, energy(distortion));
    result.sir = ratio_db(e_target, energy(parts.e_interf));
    result.sar = ratio_db(energy(target_interf), energy(parts.e_artif));
    if (keep_parts) result.parts = std::move(parts);
    return result;
}

}  // namespace htmd::metrics
