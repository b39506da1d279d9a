#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "htmd/checkpoint.hpp"
#include "htmd/errors.hpp"
#include "htmd/trainer.hpp"

using namespace htmd;
using namespace htmd::train;
using diff::Array;
using diff::Tensor;

namespace {

Tensor<double> vec(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor<double>(Array<double>({n}, std::move(v)), true);
}

double mean_sq(const std::vector<double>& y, const std::vector<double>& e) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - e[i]) * (y[i] - e[i]);
    return acc / static_cast<double>(y.size());
}

double mean_abs(const std::vector<double>& y, const std::vector<double>& e) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - e[i]);
    return acc / static_cast<double>(y.size());
}

model::ModelConfig tiny(std::size_t length) {
    auto cfg = model::ModelConfig::preset("tiny-htmd");
    cfg.input_length = length;
    return cfg;
}

std::vector<Song> toy_songs(std::size_t count, std::size_t length) {
    std::vector<Song> songs;
    for (std::size_t s = 0; s < count; ++s) {
        auto m = fixtures::tone_burst_mixture(length, 22050, 100 + s);
        songs.push_back({"song" + std::to_string(s), m.mixture, m.vocals});
    }
    return songs;
}

TrainConfig small_train(std::size_t length) {
    TrainConfig tc;
    tc.chunk_len = length;
    tc.batch_size = 2;
    tc.learning_rate = 1e-3;
    tc.steps_per_epoch = 3;
    tc.max_epochs = 4;
    tc.patience = 2;
    tc.seed = 11;
    return tc;
}

Array<float> forward_eval(model::Separator<float>& m, const Array<float>& x) {
    m.set_training(false);
    diff::NoGradGuard guard;
    return m.forward(Tensor<float>(x)).final_estimate.value();
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("mse and mae examples") {
    CHECK(mse(vec({0, 0}), vec({1, 1})).value()[0] == 1.0);
    CHECK(mae(vec({0, 0}), vec({1, 1})).value()[0] == 1.0);
    CHECK(mse(vec({0}), vec({2})).value()[0] == 4.0);
    CHECK(mae(vec({0}), vec({2})).value()[0] == 2.0);
    CHECK(mse(vec({0.3, -1}), vec({0.3, -1})).value()[0] == 0.0);
    CHECK(mae(vec({0.3, -1}), vec({0.3, -1})).value()[0] == 0.0);
    CHECK_THROWS_AS(mse(vec({0, 0}), vec({0})), ShapeError);
    CHECK_THROWS_AS(mae(vec({0, 0}), vec({0})), ShapeError);
}

TEST_CASE("mse and mae gradients reach both arguments") {
    auto y = vec({0.0, 1.0}), e = vec({2.0, 0.5});
    diff::backward(mse(y, e));
    CHECK(e.grad()[0] == doctest::Approx(2.0));   // 2 (e - y) / n
    CHECK(e.grad()[1] == doctest::Approx(-0.5));
    CHECK(y.grad()[0] == doctest::Approx(-2.0));
    auto y2 = vec({0.0, 1.0, 3.0}), e2 = vec({2.0, 0.5, 3.0});
    diff::backward(mae(y2, e2));
    CHECK(e2.grad()[0] == doctest::Approx(1.0 / 3.0));
    CHECK(e2.grad()[1] == doctest::Approx(-1.0 / 3.0));
    CHECK(e2.grad()[2] == 0.0);
}

TEST_CASE("deep loss arithmetic") {
    // L1 = mse = 2, L2 = mse = 4
    LossSpec spec{LossKind::mse, LossKind::mse, 1.0, 0.5};
    auto y = vec({0, 0});
    auto fin = vec({std::sqrt(2.0), std::sqrt(2.0)});
    auto mid = vec({2, 2});
    CHECK(deep_loss(y, fin, mid, spec).value()[0] == doctest::Approx(4.0).epsilon(1e-15));

    auto s = LossSpec::preset("mse-mae");
    CHECK(s.l1 == LossKind::mae);
    CHECK(s.l2 == LossKind::mse);
    CHECK(s.alpha == 0.1);
    CHECK(s.beta == 1.0);
    CHECK(deep_loss(vec({0}), vec({1}), vec({1}), s).value()[0] == doctest::Approx(1.1).epsilon(1e-15));

    auto none = LossSpec::preset("none-mse");
    const double l1 = mse(y, fin).value()[0];
    CHECK(deep_loss(y, fin, Tensor<double>(), none).value()[0] == l1);
    CHECK_THROWS_AS(deep_loss(vec({0, 0}), vec({0}), vec({0}), spec), ShapeError);
}

TEST_CASE("all weight presets against hand computation") {
    const std::vector<double> y{0.5, -0.25, 1.0}, f{0.0, 0.25, 0.5}, m{1.5, -1.25, 0.0};
    struct Row {
        const char* name;
        bool l1_abs, l2_abs;
        double alpha, beta;
    };
    const Row rows[] = {{"mse-mse", false, false, 1.0, 0.5},
                        {"mae-mae", true, true, 1.0, 0.5},
                        {"mae-mse", false, true, 1.0, 0.05},
                        {"mse-mae", true, false, 0.1, 1.0}};
    for (const auto& r : rows) {
        INFO(r.name);
        const double l1 = r.l1_abs ? mean_abs(y, f) : mean_sq(y, f);
        const double l2 = r.l2_abs ? mean_abs(y, m) : mean_sq(y, m);
        const double got = deep_loss(vec(y), vec(f), vec(m), LossSpec::preset(r.name)).value()[0];
        CHECK(got == doctest::Approx(r.alpha * l1 + r.beta * l2).epsilon(1e-14));
    }
    CHECK(LossSpec::preset("none-mae").beta == 0.0);
    CHECK_THROWS_AS(LossSpec::preset("mse"), ConfigError);
}

TEST_CASE("loss spec invariants") {
    LossSpec bad{LossKind::mse, LossKind::none, 1.0, 0.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {LossKind::mse, LossKind::mse, 1.0, 0.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {LossKind::mse, LossKind::mse, 0.0, 0.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {LossKind::none, LossKind::mse, 1.0, 0.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("beta zero leaves only the final-estimate branch in the gradients") {
    Rng r1(3), r2(3);
    model::Separator<double> a(tiny(256), r1), b(tiny(256), r2);
    Array<double> x({2, 1, 256}), y({2, 1, 256});
    Rng data(4);
    for (auto& v : x.values()) v = data.uniform(-1, 1);
    for (auto& v : y.values()) v = data.uniform(-1, 1);
    const auto spec = LossSpec::preset("none-mae");
    auto oa = a.forward(Tensor<double>(x));
    diff::backward(deep_loss(Tensor<double>(y), oa.final_estimate, oa.intermediate, spec));
    auto ob = b.forward(Tensor<double>(x));
    diff::backward(diff::scale(mae(Tensor<double>(y), ob.final_estimate), spec.alpha));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.parameters().entries().size(); ++i) {
        const auto& pa = a.parameters().entries()[i];
        if (!pa.trainable) continue;
        const auto& ga = pa.tensor.grad();
        const auto& gb = b.parameters().entries()[i].tensor.grad();
        for (std::size_t k = 0; k < ga.size(); ++k) worst = std::max(worst, std::abs(ga[k] - gb[k]));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("adam first step, zero gradient and two-step recurrence") {
    AdamConfig cfg;
    Array<double> p({1}, 0.0), g({1}, 1.0), m({1}), v({1});
    adam_update(p, g, m, v, 1, cfg);
    CHECK(p[0] == doctest::Approx(-1e-4).epsilon(1e-6));
    CHECK(m[0] == doctest::Approx(0.1));
    CHECK(v[0] == doctest::Approx(0.001));

    const double before = p[0], m1 = m[0], v1 = v[0];
    Array<double> zero({1}, 0.0);
    adam_update(p, zero, m, v, 2, cfg);
    CHECK(m[0] == doctest::Approx(0.9 * m1));
    CHECK(v[0] == doctest::Approx(0.999 * v1));
    CHECK(p[0] != before);  // decayed moments still move the parameter

    Array<double> q({1}, 0.5), mg({1}), vg({1}), c({1}, 0.3);
    adam_update(q, c, mg, vg, 1, cfg);
    adam_update(q, c, mg, vg, 2, cfg);
    double hp = 0.5, hm = 0.0, hv = 0.0;
    for (int t = 1; t <= 2; ++t) {
        hm = 0.9 * hm + 0.1 * 0.3;
        hv = 0.999 * hv + 0.001 * 0.09;
        const double mh = hm / (1.0 - std::pow(0.9, t)), vh = hv / (1.0 - std::pow(0.999, t));
        hp -= 1e-4 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(std::abs(q[0] - hp) <= 1e-12);
    CHECK(std::abs(mg[0] - hm) <= 1e-12);
    CHECK(std::abs(vg[0] - hv) <= 1e-12);
}

TEST_CASE("adam decreases a convex quadratic and refuses non-finite gradients") {
    AdamConfig cfg;
    cfg.learning_rate = 1e-2;
    const std::vector<double> target{1.0, -2.0, 0.5};
    Array<double> p({3}, 0.0), m({3}), v({3});
    auto f = [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < 3; ++i) acc += (p[i] - target[i]) * (p[i] - target[i]);
        return acc;
    };
    for (std::size_t step = 1; step <= 5; ++step) {
        Array<double> g({3});
        for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0 * (p[i] - target[i]);
        const double before = f();
        adam_update(p, g, m, v, step, cfg);
        CHECK(f() < before);
    }

    Adam<double> opt(cfg);
    diff::ParameterStore<double> store;
    Rng rng(0);
    auto w = store.add("w", {2}, diff::InitSpec::constant(0.25), rng);
    w.accumulate_grad(Array<double>({2}, {1.0, std::nan("")}));
    CHECK_THROWS_AS(opt.step(store.entries()), NumericFault);
    CHECK(w.value()[0] == 0.25);
    CHECK(opt.steps() == 0);
}

TEST_CASE("sample_batch alignment, determinism, shape and padding") {
    auto songs = toy_songs(3, 20000);
    TrainConfig tc;
    Rng a(5), b(5);
    const auto ba = sample_batch(songs, tc, a);
    const auto bb = sample_batch(songs, tc, b);
    CHECK(ba.mixture.shape() == diff::Shape{16, 1, 16384});
    CHECK(ba.vocals.shape() == diff::Shape{16, 1, 16384});
    CHECK(ba.mixture.storage() == bb.mixture.storage());
    CHECK(ba.offset == bb.offset);
    for (std::size_t i = 0; i < 16; ++i) {
        const auto& s = songs[ba.song[i]];
        CHECK(ba.offset[i] + 16384 <= 20000);
        for (std::size_t t = 0; t < 16384; t += 997) {
            CHECK(ba.mixture[i * 16384 + t] == s.mixture[ba.offset[i] + t]);
            CHECK(ba.vocals[i * 16384 + t] == s.vocals[ba.offset[i] + t]);
        }
        CHECK_FALSE(ba.padded[i]);
    }

    std::vector<Song> short_song{{"short", std::vector<float>(100, 0.5f), std::vector<float>(100, 0.25f)}};
    tc.batch_size = 1;
    const auto p = sample_batch(short_song, tc, a);
    CHECK(p.padded[0]);
    CHECK(p.mixture[99] == 0.5f);
    CHECK(p.mixture[100] == 0.0f);
    CHECK(p.vocals[16383] == 0.0f);
}

TEST_CASE("validation tiling is fixed and non-overlapping") {
    auto songs = toy_songs(2, 1000);
    const auto batches = validation_batches(songs, 256, 3);
    std::size_t chunks = 0;
    for (const auto& b : batches) chunks += b.mixture.dim(0);
    CHECK(chunks == 8);  // 4 per song, last zero-padded
    CHECK(batches[0].offset[1] == 256);
    CHECK(batches[0].mixture[256 + 3] == songs[0].mixture[256 + 3]);
}

TEST_CASE("early stopping counters") {
    EarlyStopping improving(3);
    for (double v : {5.0, 4.0, 3.0, 2.0, 1.0, 0.5}) {
        CHECK(improving.update(v));
        CHECK_FALSE(improving.should_stop());
    }
    EarlyStopping flat(3);
    CHECK(flat.update(1.0));
    std::size_t extra = 0;
    while (!flat.should_stop()) {
        CHECK_FALSE(flat.update(1.0));
        ++extra;
    }
    CHECK(extra == 3);
}

TEST_CASE("checkpoint round trip is bitwise") {
    const auto dir = fixtures::scratch_dir("ckpt");
    Rng rng(9);
    model::Separator<float> m(tiny(256), rng);
    Trainer tr(m, LossSpec::preset("mse-mse"), small_train(256));
    auto songs = toy_songs(2, 600);
    for (int i = 0; i < 2; ++i) tr.step(sample_batch(songs, tr.config(), tr.rng()));

    save_checkpoint(dir / "a.ckpt", m, &tr.optimizer(), {{"note", "x"}});
    auto loaded = load_checkpoint(dir / "a.ckpt");
    REQUIRE(loaded.has_optimizer);
    CHECK(loaded.meta["note"] == "x");
    CHECK(loaded.optimizer.steps() == 2);
    const auto& pa = m.parameters().entries();
    const auto& pb = loaded.model->parameters().entries();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor.value().storage() == pb[i].tensor.value().storage());
    const auto& ma = tr.optimizer().moments();
    const auto& mb = loaded.optimizer.moments();
    REQUIRE(ma.size() == mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) {
        CHECK(ma[i].m.storage() == mb[i].m.storage());
        CHECK(ma[i].v.storage() == mb[i].v.storage());
    }

    Array<float> x({1, 1, 256});
    for (std::size_t t = 0; t < 256; ++t) x[t] = std::sin(0.1f * static_cast<float>(t));
    CHECK(forward_eval(m, x).storage() == forward_eval(*loaded.model, x).storage());
}

TEST_CASE("checkpoint error paths") {
    const auto dir = fixtures::scratch_dir("ckpt_err");
    Rng rng(1);
    model::Separator<float> m(tiny(256), rng);
    save_checkpoint(dir / "m.ckpt", m);

    auto other_cfg = tiny(256);
    other_cfg.denoiser.growth = 4;
    model::Separator<float> other(other_cfg, rng);
    CHECK_THROWS_AS(load_checkpoint_into(dir / "m.ckpt", other), CheckpointError);

    std::ifstream in(dir / "m.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    {
        std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
        out << bytes.substr(0, bytes.size() - 100);
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), CheckpointError);
    {
        std::string v2 = bytes;
        v2.replace(v2.find("v1"), 2, "v9");
        std::ofstream out(dir / "v9.ckpt", std::ios::binary);
        out << v2;
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "v9.ckpt"), CheckpointError);
    {
        std::string bad = bytes;
        bad.replace(bad.find("\"tensors\""), 9, "\"tensorz\"");
        std::ofstream out(dir / "manifest.ckpt", std::ios::binary);
        out << bad;
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "manifest.ckpt"), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
    CHECK(config_hash(tiny(256)) == config_hash(tiny(256)));
    CHECK(config_hash(tiny(256)) != config_hash(other_cfg));
}

TEST_CASE("resumed training repeats the uninterrupted next-step loss") {
    const auto dir = fixtures::scratch_dir("resume");
    auto songs = toy_songs(2, 700);
    Rng init(21);
    model::Separator<float> m(tiny(256), init);
    Trainer straight(m, LossSpec::preset("mse-mse"), small_train(256));
    for (int i = 0; i < 3; ++i) straight.step(sample_batch(songs, straight.config(), straight.rng()));
    save_checkpoint(dir / "mid.ckpt", m, &straight.optimizer(), straight.state_meta());
    const double next = straight.step(sample_batch(songs, straight.config(), straight.rng()));

    Rng other_init(99);
    model::Separator<float> m2(tiny(256), other_init);
    Trainer resumed(m2, LossSpec::preset("mse-mse"), small_train(256));
    nlohmann::json meta;
    load_checkpoint_into(dir / "mid.ckpt", m2, &resumed.optimizer(), &meta);
    resumed.restore_state_meta(meta);
    const double again = resumed.step(sample_batch(songs, resumed.config(), resumed.rng()));
    CHECK(again == next);
}

TEST_CASE("fit keeps the best validation weights") {
    auto train_songs = toy_songs(2, 800);
    auto valid_songs = toy_songs(1, 600);
    Rng init(5);
    model::Separator<float> m(tiny(256), init);
    Trainer tr(m, LossSpec::preset("mse-mse"), small_train(256));
    std::size_t calls = 0;
    const auto h = tr.fit(train_songs, valid_songs, [&](const EpochRecord&, bool) { ++calls; });
    REQUIRE_FALSE(h.epochs.empty());
    CHECK(calls == h.epochs.size());
    CHECK(h.step_losses.size() == 3 * h.epochs.size());
    CHECK(h.best_valid_loss <= h.epochs.back().valid_loss);
    const double restored = tr.evaluate(validation_batches(valid_songs, 256, 2));
    CHECK(restored == doctest::Approx(h.best_valid_loss).epsilon(1e-6));
    CHECK(history_csv(h).rfind("epoch,train_loss,valid_loss\n", 0) == 0);
}

TEST_CASE("trainer configuration errors") {
    Rng rng(0);
    auto cfg = model::ModelConfig::preset("tiny-htmd");
    cfg.architecture = model::Architecture::conv_tasnet;
    cfg.input_length = 256;
    model::Separator<float> tasnet(cfg, rng);
    CHECK_THROWS_AS(Trainer(tasnet, LossSpec::preset("mse-mse"), small_train(256)), ConfigError);
    model::Separator<float> m(tiny(256), rng);
    CHECK_THROWS_AS(Trainer(m, LossSpec::preset("mse-mse"), small_train(512)), ConfigError);
}

}  // TEST_SUITE
