#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "floodsr/checkpoint.hpp"
#include "floodsr/evalstats.hpp"
#include "floodsr/raster_io.hpp"
#include "floodsr/rng.hpp"
#include "floodsr/train.hpp"
#include "floodsr/wfm_ops.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace floodsr;

namespace {

NetConfig toy_net() {
    NetConfig c;
    c.features = 8;
    c.blocks = 2;
    c.layers = 2;
    c.growth = 8;
    return c;
}

BinaryGrid blob(int variant) {
    BinaryGrid g(100, 100, 0);
    const double ci = 30.0 + 9.0 * variant, cj = 60.0 - 7.0 * variant, rad = 22.0 + 3.0 * variant;
    for (int i = 0; i < 100; ++i) {
        for (int j = 0; j < 100; ++j) {
            const bool disc = std::hypot(i - ci, j - cj) < rad;
            const bool strip = std::abs(i + j - 120 - 5 * variant) < 4;
            g(i, j) = (disc || strip) ? 1 : 0;
        }
    }
    return g;
}

TrainingTile make_tile(int variant) {
    TrainingTile t;
    t.fim = blob(variant);
    t.wfm = aggregate(t.fim);
    return t;
}

FractionGrid as_prob(const BinaryGrid& y, double clip) {
    FractionGrid s(y.rows(), y.cols());
    for (std::size_t k = 0; k < y.size(); ++k) s[k] = static_cast<float>(y[k] ? 1.0 - clip : clip);
    return s;
}

// A tiny on-disk dataset with explicit splits.
DatasetManifest write_dataset(const std::filesystem::path& dir, int n_train, int n_val) {
    DatasetManifest m;
    m.seed = 1;
    m.config_hash = "test";
    m.root = dir;
    std::filesystem::create_directories(dir / "tiles");
    for (int k = 0; k < n_train + n_val; ++k) {
        const TrainingTile t = make_tile(k % 4);
        TileRecord r;
        r.fim = "tiles/t" + std::to_string(k) + ".pgm";
        r.wfm = "tiles/t" + std::to_string(k) + ".wfg";
        r.row0 = static_cast<std::size_t>(k) * 100;
        r.split = k < n_train ? Split::train : Split::val;
        write_binary_grid(t.fim, m.fim_path(r));
        write_fraction_grid(t.wfm, m.wfm_path(r));
        m.tiles.push_back(r);
    }
    save_manifest(m, dir / "manifest.json");
    return load_manifest(dir / "manifest.json");
}

}  // namespace

TEST_CASE("loss anchors") {
    const BinaryGrid y = blob(0);
    const FractionGrid x = aggregate(y);

    FractionGrid half(100, 100, 0.5f);
    const LossBreakdown h = loss_pace(y, half, x, 0.0);
    CHECK(std::abs(h.ace - std::log(2.0)) < 1e-9);
    CHECK(h.total == h.ace);
    CHECK(h.eta == 0.0);

    // Penalty of a constant 0.5 map, summed by hand.
    double want = 0;
    for (float v : x.cells()) want += (v - 0.5) * (v - 0.5);
    const LossBreakdown h2 = loss_pace(y, half, x, 10.0);
    CHECK(h2.penalty == doctest::Approx(want).epsilon(1e-9));
    CHECK(h2.total == doctest::Approx(h2.ace + 10.0 * want).epsilon(1e-12));

    // Perfect fit: ace ~ clip, penalty from the clip alone is far below 1e-9.
    const double eps = 1e-7;
    const LossBreakdown p = loss_pace(y, as_prob(y, eps), x, 100.0, ScaleFactor{}, eps);
    CHECK(p.ace >= 0.0);
    CHECK(p.ace <= -std::log(1.0 - eps) * 1.5 + 1e-9);
    CHECK(p.penalty < 1e-9);
    CHECK(p.total >= p.ace);

    CHECK(testing::kind_of([&] { loss_pace(y, FractionGrid(90, 90, 0.5f), x, 1.0); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("penalty vanishes exactly on fraction-matched maps") {
    const BinaryGrid y = blob(1);
    const FractionGrid x = aggregate(y);
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        // Patch fraction plus zero-sum jitter, shuffled within the patch.
        std::vector<double> s(10000);
        for (int ci = 0; ci < 10; ++ci) {
            for (int cj = 0; cj < 10; ++cj) {
                std::vector<double> vals(100);
                const double frac = x(ci, cj);
                const double amp = std::min(frac, 1.0 - frac) * rng.uniform(0.0, 1.0);
                for (int k = 0; k < 100; ++k) vals[static_cast<std::size_t>(k)] = frac + (k % 2 ? amp : -amp);
                rng.shuffle(vals.begin(), vals.end());
                for (int k = 0; k < 100; ++k) {
                    s[static_cast<std::size_t>((ci * 10 + k / 10) * 100 + cj * 10 + k % 10)] =
                        vals[static_cast<std::size_t>(k)];
                }
            }
        }
        const std::span<const double> sp(s);
        const LossBreakdown matched = loss_pace<double>(y, sp, x, 1000.0, ScaleFactor{}, 1e-7, nullptr);
        CHECK(matched.penalty < 1e-12);

        // Move one pixel of one patch: penalty becomes (delta / 100)^2.
        const double delta = rng.uniform(0.01, 0.2);
        auto moved = s;
        const std::size_t pix = static_cast<std::size_t>(rng.below(10000));
        const double d = moved[pix] + delta <= 1.0 ? delta : -delta;
        moved[pix] += d;
        const std::span<const double> mp(moved);
        const LossBreakdown off = loss_pace<double>(y, mp, x, 1000.0, ScaleFactor{}, 1e-7, nullptr);
        CHECK(off.penalty == doctest::Approx(d * d / 1e4).epsilon(1e-6));
        CHECK(off.total > matched.total - 1.0);
    }
}

TEST_CASE("eta changes the gradient of the upsampling head on a mismatched input") {
    const TrainingTile t = make_tile(2);
    auto params = convert_params<double>(init_params(gradcheck::tiny_config(), 3));
    ForwardTrace<double> tr;
    forward(t.wfm, params, tr);
    GradSet<double> g0 = zero_grads(params), g1 = zero_grads(params);
    grad_loss(t.fim, tr, t.wfm, params, 0.0, 1e-7, g0);
    grad_loss(t.fim, tr, t.wfm, params, 1000.0, 1e-7, g1);
    const LossBreakdown l = grad_loss(t.fim, tr, t.wfm, params, 1000.0, 1e-7, g1);
    CHECK(l.penalty > 0.0);
    bool any_up = false;
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        if (!params.tensors[k].name.starts_with("up")) continue;
        any_up = true;
        double diff = 0;
        for (std::size_t i = 0; i < g0[k].size(); ++i) diff = std::max(diff, std::abs(g0[k][i] - g1[k][i]));
        CHECK_MESSAGE(diff > 1e-6, params.tensors[k].name);
    }
    CHECK(any_up);
}

TEST_CASE("adam") {
    NetParams p = init_params(toy_net(), 1);
    const NetParams before = p;
    AdamState st;
    GradSet<float> zero = zero_grads(p);
    adam_step(p, zero, st, 1e-3);
    for (std::size_t t = 0; t < p.tensors.size(); ++t) CHECK(p.tensors[t].values == before.tensors[t].values);

    // Scalar-like check: a constant unit gradient moves every weight down by
    // about lr on the first step (m_hat / sqrt(v_hat) = 1 / (1 + eps)).
    NetParams q = init_params(toy_net(), 1);
    AdamState st2;
    GradSet<float> ones = zero_grads(q);
    for (auto& g : ones) std::fill(g.begin(), g.end(), 1.0f);
    const NetParams q0 = q;
    adam_step(q, ones, st2, 1e-3);
    const float w0 = q0.tensors[0].values[0];
    CHECK(q.tensors[0].values[0] == doctest::Approx(w0 - 1e-3).epsilon(1e-4));
    // Keeps moving the same way.
    float prev = q.tensors[0].values[0];
    for (int s = 0; s < 20; ++s) {
        adam_step(q, ones, st2, 1e-3);
        const float now = q.tensors[0].values[0];
        CHECK(now < prev);
        CHECK(prev - now < 1.01e-3f);
        prev = now;
    }
    CHECK(st2.step == 21);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(validate(c));
    c.eta = 2001;
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = TrainConfig{};
    c.lr0 = 2e-4;
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = TrainConfig{};
    c.decay = 0.0;
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = TrainConfig{};
    c.epochs = 0;
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = TrainConfig{};
    c.batch = 0;
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("one epoch on two tiles, deterministic, logged") {
    testing::TempDir dir("train");
    const std::vector<TrainingTile> tr{make_tile(0), make_tile(1)};
    const std::vector<TrainingTile> va{make_tile(2)};
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 2;
    const TrainResult a = train(tr, va, toy_net(), cfg, dir / "a.ckpt", dir / "a.csv");
    const TrainResult b = train(tr, va, toy_net(), cfg, dir / "b.ckpt", dir / "b.csv");
    REQUIRE(a.log.size() == 2);
    for (const auto& e : a.log) {
        CHECK(std::isfinite(e.train.total));
        CHECK(std::isfinite(e.val.total));
        CHECK(e.train.total == doctest::Approx(e.train.ace + cfg.eta * e.train.penalty));
    }
    CHECK(a.log[1].lr == doctest::Approx(cfg.lr0 * cfg.decay));
    CHECK(testing::slurp(dir / "a.ckpt") == testing::slurp(dir / "b.ckpt"));
    CHECK(testing::slurp(dir / "a.csv") == testing::slurp(dir / "b.csv"));

    std::istringstream csv(testing::slurp(dir / "a.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "epoch,lr,train_ace,train_penalty,train_total,val_ace,val_penalty,val_total");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 2);

    const NetParams best = load_checkpoint(dir / "a.ckpt", toy_net());
    CHECK(best.train_seed == cfg.seed);
    CHECK(evaluate_loss(best, va, cfg.eta).total == doctest::Approx(a.best_val_total).epsilon(1e-12));

    CHECK(testing::kind_of([&] { train({}, va, toy_net(), cfg); }) == ErrorKind::EmptyDataset);
    CHECK(testing::kind_of([&] { train(tr, {}, toy_net(), cfg); }) == ErrorKind::EmptyDataset);
}

TEST_CASE("overfitting a single tile") {
    // Default network at the top of the allowed learning-rate range, no decay.
    // eta = 0: with the penalty on, 500 steps are not enough to leave the
    // grey fraction-matching plateau (see the decisions ledger).
    const std::vector<TrainingTile> one{make_tile(3)};
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.batch = 1;
    cfg.decay = 1.0;
    cfg.eta = 0.0;
    const TrainResult r = train(one, one, NetConfig{}, cfg);

    // After epoch 10 the loss may tick up by at most 5% over its running minimum.
    double low = r.log[10].train.total;
    for (std::size_t e = 11; e < r.log.size(); ++e) {
        CHECK(r.log[e].train.total <= low * 1.05);
        low = std::min(low, r.log[e].train.total);
    }

    const FractionGrid s = forward(one[0].wfm, r.best);
    const BinaryGrid band = band_mask(one[0].wfm);
    const ConfusionCounts cc = confusion(threshold_grid(s, 0.5), one[0].fim, band);
    CHECK(accuracy(cc) > 0.99);

}

TEST_CASE("gradient vanishes on a converged toy fit") {
    // Plain Adam loop (lr above the training range) so the toy net reaches S ~ clip(Y).
    const TrainingTile t = make_tile(3);
    NetParams p = init_params(toy_net(), 1);
    AdamState st;
    GradSet<float> g = zero_grads(p);
    ForwardTrace<float> tr;
    for (int step = 0; step < 1500; ++step) {
        for (auto& v : g) std::fill(v.begin(), v.end(), 0.0f);
        forward(t.wfm, p, tr);
        grad_loss(t.fim, tr, t.wfm, p, 0.0, 1e-7, g);
        adam_step(p, g, st, 1e-3);
    }
    forward(t.wfm, p, tr);
    GradSet<float> at = zero_grads(p);
    const LossBreakdown l = grad_loss(t.fim, tr, t.wfm, p, 0.0, 1e-7, at);
    double sq = 0;
    for (const auto& v : at) {
        for (float x : v) sq += static_cast<double>(x) * x;
    }
    CHECK(l.ace < 1e-4);
    CHECK(l.penalty < 1e-6);
    CHECK(std::sqrt(sq) < 1e-3);
}

TEST_CASE("random search") {
    testing::TempDir dir("search");
    const DatasetManifest m = write_dataset(dir / "data", 2, 1);
    SearchSpace space;
    space.blocks = {2, 2, 2};
    space.layers = {2, 4, 2};
    space.features = {8, 16, 8};
    space.growth = {8, 8, 8};
    space.budget = 3;
    space.seed = 5;
    const SearchResult r = random_search(space, m, 1, TrainConfig{}, NetConfig{}, dir / "out");
    REQUIRE(r.trials.size() == 3);
    for (const auto& t : r.trials) {
        CHECK(t.val_total >= r.trials[r.best].val_total);
        CHECK(t.train.eta >= space.eta_lo);
        CHECK(t.train.eta <= space.eta_hi);
        CHECK(t.train.lr0 >= space.lr_lo);
        CHECK(t.train.lr0 <= space.lr_hi);
        CHECK(t.net.blocks == 2);
        CHECK((t.net.layers == 2 || t.net.layers == 4));
        CHECK((t.net.features == 8 || t.net.features == 16));
        CHECK(t.train.epochs == 1);
    }
    CHECK(std::filesystem::exists(dir / "out" / "trial_002.ckpt"));

    write_trial_table(r, dir / "trials.csv");
    std::istringstream csv(testing::slurp(dir / "trials.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "trial,eta,lr0,blocks,layers,features,growth,epochs,val_total");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 3);

    space.budget = 1;
    const SearchResult single = random_search(space, m, 1);
    CHECK(single.trials.size() == 1);
    CHECK(single.best == 0);

    space.budget = 0;
    CHECK(testing::kind_of([&] { random_search(space, m, 1); }) == ErrorKind::EmptyBudget);
    space.budget = 1;
    space.eta_hi = 3000;
    CHECK(testing::kind_of([&] { random_search(space, m, 1); }) == ErrorKind::InvalidConfig);
}
