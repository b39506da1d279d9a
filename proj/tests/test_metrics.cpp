#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "htmd/bss_eval.hpp"
#include "htmd/errors.hpp"
#include "htmd/evaluation.hpp"
#include "htmd/kde.hpp"
#include "htmd/report_io.hpp"
#include "htmd/significance.hpp"
#include "oracles.hpp"

using namespace htmd;
using namespace htmd::metrics;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> gaussian(std::size_t n, std::mt19937_64& gen, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(gen);
    return v;
}

SegmentScores seg(const std::string& song, std::size_t i, std::optional<double> sdr) {
    SegmentScores s;
    s.song_id = song;
    s.segment = i;
    s.sdr = s.sir = s.sar = sdr;
    s.vad_frame_correct = {true, false};
    s.vad_correct = 0.5;
    return s;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("bss_eval matches a dense least-squares oracle") {
    std::mt19937_64 gen(1);
    for (std::size_t taps : {1u, 2u, 4u, 8u}) {
        auto v = gaussian(64, gen), a = gaussian(64, gen), noise = gaussian(64, gen, 0.3);
        std::vector<double> e(64);
        for (std::size_t t = 0; t < 64; ++t) e[t] = 0.8 * v[t] + 0.3 * a[t] + (t ? 0.2 * v[t - 1] : 0.0) + noise[t];
        const auto got = bss_eval(v, a, e, taps, true);
        const auto ref = oracles::bss(v, a, e, taps);
        INFO("taps " << taps);
        CHECK(std::abs(*got.sdr - ref.sdr) <= 1e-6);
        CHECK(std::abs(*got.sir - ref.sir) <= 1e-6);
        CHECK(std::abs(*got.sar - ref.sar) <= 1e-6);
        for (std::size_t t = 0; t < 64; ++t) CHECK(std::abs(got.parts->s_target[t] - ref.s_target[t]) <= 1e-8);
    }
}

TEST_CASE("bss_eval decomposition identity and orthogonality") {
    std::mt19937_64 gen(2);
    const std::size_t T = 200, taps = 6;
    auto v = gaussian(T, gen), a = gaussian(T, gen), e = gaussian(T, gen);
    for (std::size_t t = 0; t < T; ++t) e[t] += v[t] - 0.5 * a[t];
    const auto r = bss_eval(v, a, e, taps, true);
    const auto& p = *r.parts;
    for (std::size_t t = 0; t < T; ++t) CHECK(std::abs(p.s_target[t] + p.e_interf[t] + p.e_artif[t] - e[t]) <= 1e-10);
    const auto cols = oracles::delay_matrix({v, a}, taps);
    const double ni = std::sqrt(oracles::energy(p.e_interf)), na = std::sqrt(oracles::energy(p.e_artif));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const double nc = std::sqrt(oracles::energy(cols[c]));
        const double dot_a = std::inner_product(cols[c].begin(), cols[c].end(), p.e_artif.begin(), 0.0);
        CHECK(std::abs(dot_a) <= 1e-8 * nc * na);
        if (c < taps) {
            const double dot_i = std::inner_product(cols[c].begin(), cols[c].end(), p.e_interf.begin(), 0.0);
            CHECK(std::abs(dot_i) <= 1e-8 * nc * ni);
        }
    }
}

TEST_CASE("bss_eval perfect estimate, scale invariance and silent reference") {
    std::mt19937_64 gen(3);
    auto v = gaussian(128, gen), a = gaussian(128, gen);
    const auto perfect = bss_eval(v, a, v, 1);
    CHECK(*perfect.sdr == kInf);
    CHECK(*perfect.sir == kInf);
    CHECK(*perfect.sar == kInf);

    auto e = gaussian(128, gen);
    for (std::size_t t = 0; t < 128; ++t) e[t] += v[t];
    const auto base = bss_eval(v, a, e, 4);
    for (double alpha : {0.5, 2.0, 10.0}) {
        std::vector<double> s(e);
        for (auto& x : s) x *= alpha;
        const auto r = bss_eval(v, a, s, 4);
        CHECK(std::abs(*r.sdr - *base.sdr) <= 1e-9);
        CHECK(std::abs(*r.sir - *base.sir) <= 1e-9);
        CHECK(std::abs(*r.sar - *base.sar) <= 1e-9);
    }

    std::vector<double> zero(128, 0.0);
    CHECK_FALSE(bss_eval(zero, a, e, 4).defined());
    CHECK(ratio_db(0.0, 1.0) == -kInf);
    CHECK(ratio_db(1.0, 0.0) == kInf);
    CHECK(ratio_db(10.0, 1.0) == doctest::Approx(10.0));
    CHECK_THROWS_AS(bss_eval(v, a, std::vector<double>(127), 4), ShapeError);
}

TEST_CASE("segment metrics tiling, silence and concatenation invariance") {
    std::mt19937_64 gen(4);
    const std::size_t rate = 1000;
    auto v = gaussian(3500, gen), a = gaussian(3500, gen), e = gaussian(3500, gen);
    for (std::size_t t = 1000; t < 2000; ++t) v[t] = 0.0;
    for (std::size_t t = 0; t < 3500; ++t) e[t] = 0.5 * e[t] + v[t];
    EvalConfig cfg;
    cfg.filter_len = 8;
    cfg.pes_frame = 256;
    const auto segs = segment_metrics("s", v, a, e, rate, cfg);
    REQUIRE(segs.size() == 3);
    CHECK(segs[1].is_silent);
    CHECK_FALSE(segs[1].sdr.has_value());
    CHECK(segs[1].near_silent);
    CHECK_FALSE(segs[0].is_silent);
    for (std::size_t s : {0u, 2u}) {
        const std::span<const double> sv(v.data() + s * rate, rate), sa(a.data() + s * rate, rate),
            se(e.data() + s * rate, rate);
        const auto alone = bss_eval(sv, sa, se, 8);
        CHECK(std::abs(*segs[s].sdr - *alone.sdr) <= 1e-9);
        CHECK(std::abs(*segs[s].sir - *alone.sir) <= 1e-9);
        CHECK(std::abs(*segs[s].sar - *alone.sar) <= 1e-9);
    }
    CHECK(segs[1].pes_frames.size() == 3);  // frames starting at 1024, 1280, 1536 (1792 spans into speech)
    CHECK_THROWS_AS(segment_metrics("s", std::span<const double>(v.data(), 999), std::span<const double>(a.data(), 999),
                                    std::span<const double>(e.data(), 999), rate, cfg),
                    ShapeError);
}

TEST_CASE("pes examples") {
    std::vector<double> ref(8192, 0.0), est(8192, 0.0);
    auto r = pes(est, ref);
    REQUIRE(r.mean_db);
    CHECK(*r.mean_db == -100.0);
    CHECK(r.frame_db.size() == 2);

    std::fill(est.begin(), est.begin() + 4096, 1.0);
    r = pes(est, ref);
    CHECK(r.frame_db[0] == 0.0);
    CHECK(r.frame_db[1] == -100.0);
    CHECK(*r.mean_db == -50.0);

    std::vector<double> loud(8192, 0.5);
    CHECK_FALSE(pes(est, loud).mean_db.has_value());

    std::vector<double> quiet(8192, 1e-4);
    for (double alpha : {1.0, 2.0, 10.0}) {
        std::vector<double> s(quiet);
        for (auto& x : s) x *= alpha;
        const double v1 = *pes(quiet, ref).mean_db, v2 = *pes(s, ref).mean_db;
        CHECK(v2 >= v1);
    }
}

TEST_CASE("vad labels and accuracy") {
    CHECK(vad_frame_length(22050) == 441);
    std::vector<double> zero(441 * 2, 0.0);
    for (bool b : vad_labels(zero, 22050)) CHECK_FALSE(b);
    std::vector<double> full(441, 1.0);
    CHECK(vad_labels(full, 22050)[0]);
    std::vector<double> sine(441 * 4);
    const double amp = std::pow(10.0, -50.0 / 20.0);
    for (std::size_t t = 0; t < sine.size(); ++t) sine[t] = amp * std::sin(2.0 * std::numbers::pi * 441.0 * t / 22050.0);
    for (bool b : vad_labels(sine, 22050)) CHECK(b);
    double ms = 0.0;
    for (double x : sine) ms += x * x;
    CHECK(10.0 * std::log10(ms / sine.size()) == doctest::Approx(-53.0103).epsilon(1e-4));

    CHECK(vad_accuracy({true, false, true}, {true, false, true}) == 100.0);
    CHECK(vad_accuracy({true, false}, {false, true}) == 0.0);
    CHECK(vad_accuracy({true, true, true, false}, {true, true, true, true}) == 75.0);
    CHECK_THROWS(vad_accuracy({true}, {true, false}));
}

TEST_CASE("aggregate examples") {
    auto r = aggregate({seg("a", 0, 1.0), seg("a", 1, 3.0), seg("a", 2, 100.0)});
    CHECK(r.sdr.song_median == 3.0);
    CHECK(r.sdr.segment_median == 3.0);
    CHECK(r.sdr.segment_mean == doctest::Approx(104.0 / 3.0));

    r = aggregate({seg("a", 0, 1.0), seg("a", 1, 2.0), seg("a", 2, 3.0), seg("b", 0, 6.0), seg("c", 0, std::nullopt),
                   seg("b", 1, kInf), seg("b", 2, 5.0)});
    CHECK(r.songs == 3);
    CHECK(r.silent_segments == 0);
    CHECK(r.sdr.song_median == 4.0);  // medians 2 and 6; song c has no defined segment
    CHECK(r.sdr.defined == 6);
    CHECK(r.sdr.pos_inf == 1);
    CHECK(r.sdr.segment_mean == doctest::Approx(17.0 / 5.0));
    CHECK(r.sdr.segment_median == 4.0);  // {1,2,3,5,6,inf}
    CHECK(r.vad_percent == 50.0);

    CHECK(median({1.0, 3.0, kInf}) == 3.0);
    CHECK(median({1.0, kInf}) == kInf);
    CHECK(median({-kInf, kInf}) == -kInf);
    CHECK_THROWS(aggregate({}));
    CHECK_THROWS(aggregate({seg("a", 0, std::nullopt)}));
}

TEST_CASE("wilcoxon against enumeration") {
    std::vector<double> a{1, 2, 3, 4, 5, 6}, b(6, 0.0);
    auto r = wilcoxon_signed_rank(a, b);
    CHECK(r.method == "exact");
    CHECK(r.p_value == doctest::Approx(0.03125).epsilon(1e-15));
    CHECK(r.statistic == 0.0);

    auto same = wilcoxon_signed_rank(a, a);
    CHECK(same.p_value == 1.0);
    CHECK(same.method == "degenerate");

    std::mt19937_64 gen(5);
    std::uniform_int_distribution<int> small(-4, 4);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n = 1 + rep % 12;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = small(gen);
            y[i] = small(gen);
        }
        INFO("rep " << rep);
        CHECK(std::abs(wilcoxon_signed_rank(x, y).p_value - oracles::wilcoxon_enumerated(x, y)) <= 1e-12);
    }

    std::vector<double> big_a(60), big_b(60, 0.0);
    for (std::size_t i = 0; i < 60; ++i) big_a[i] = std::sin(static_cast<double>(i)) + 0.3;
    auto approx = wilcoxon_signed_rank(big_a, big_b);
    CHECK(approx.method == "approximate");
    CHECK((approx.p_value > 0.0 && approx.p_value < 1.0));
    CHECK_THROWS(wilcoxon_signed_rank({1.0}, {1.0, 2.0}));
}

TEST_CASE("mcnemar examples") {
    CHECK(mcnemar_counts(5, 5).p_value == 1.0);
    CHECK(mcnemar_counts(10, 0).p_value == doctest::Approx(0.001953125).epsilon(1e-15));
    auto d = mcnemar_counts(0, 0);
    CHECK(d.p_value == 1.0);
    CHECK(d.method == "degenerate");
    for (std::size_t b = 0; b <= 25; ++b)
        for (std::size_t c = 0; b + c <= 25; ++c)
            CHECK(std::abs(mcnemar_counts(b, c).p_value - oracles::mcnemar_binomial(b, c)) <= 1e-12);
    CHECK(mcnemar_counts(30, 10).method == "approximate");
    CHECK(mcnemar_counts(30, 10).p_value == doctest::Approx(std::erfc(std::sqrt(361.0 / 40.0 / 2.0))));

    std::vector<std::pair<bool, bool>> pairs{{true, false}, {true, false}, {false, true}, {true, true}, {false, false}};
    auto p = mcnemar(pairs);
    CHECK(p.n_effective == 3);
    CHECK(p.p_value == doctest::Approx(oracles::mcnemar_binomial(2, 1)));
}

TEST_CASE("kde export") {
    auto deg = kde_export({0.0, 0.0, 0.0}, {false, false, false});
    CHECK(deg.degenerate);

    std::mt19937_64 gen(6);
    std::normal_distribution<double> around5(5.0, 0.5);
    std::vector<double> one;
    for (int i = 0; i < 200; ++i) one.push_back(around5(gen));
    auto t = kde_export(one, std::vector<bool>(200, false));
    const auto peak = std::max_element(t.overall.begin(), t.overall.end()) - t.overall.begin();
    const double step = t.x[1] - t.x[0];
    CHECK(std::abs(t.x[peak] - 5.0) <= step + 0.15);

    std::normal_distribution<double> low(-10.0, 3.0), high(8.0, 2.0);
    std::vector<double> values;
    std::vector<bool> silent;
    for (int i = 0; i < 150; ++i) {
        values.push_back(low(gen));
        silent.push_back(true);
        values.push_back(high(gen));
        silent.push_back(false);
    }
    values.push_back(kInf);
    silent.push_back(true);
    auto mix = kde_export(values, silent);
    CHECK(mix.dropped == 1);
    CHECK(mix.n_silent == 150);
    CHECK(std::abs(trapezoid(mix.x, mix.overall) - 1.0) <= 1e-3);
    CHECK(std::abs(trapezoid(mix.x, mix.silent) - 1.0) <= 1e-3);
    CHECK(std::abs(trapezoid(mix.x, mix.nonsilent) - 1.0) <= 1e-3);
    CHECK(kde_csv(mix).rfind("x,overall,silent,nonsilent\n", 0) == 0);
    CHECK_THROWS(kde_export({1.0}, {false}));
    CHECK(scott_bandwidth({1.0, 2.0, 3.0}) == doctest::Approx(std::pow(3.0, -0.2)));
}

TEST_CASE("segment csv round trip and table comparison") {
    std::vector<SegmentScores> rows{seg("a", 0, 1.25), seg("a", 1, std::nullopt), seg("b", 0, kInf)};
    rows[1].is_silent = rows[1].near_silent = true;
    rows[1].pes_frames = {-100.0, -42.5};
    rows[2].sar = -kInf;
    const auto back = parse_segments_csv(segments_csv(rows));
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].song_id == rows[i].song_id);
        CHECK(back[i].segment == rows[i].segment);
        CHECK(back[i].sdr == rows[i].sdr);
        CHECK(back[i].sar == rows[i].sar);
        CHECK(back[i].is_silent == rows[i].is_silent);
        CHECK(back[i].pes_frames == rows[i].pes_frames);
        CHECK(back[i].vad_frame_correct == rows[i].vad_frame_correct);
    }

    const auto same = compare_tables(rows, rows);
    for (const auto& c : same) CHECK(c.result.p_value == 1.0);
    auto shifted = rows;
    shifted[0].song_id = "z";
    CHECK_THROWS_AS(compare_tables(rows, shifted), DatasetError);
    CHECK_THROWS_AS(parse_segments_csv("nonsense\n1,2\n"), DatasetError);
}

}  // TEST_SUITE
