#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "floodsr/checkpoint.hpp"
#include "floodsr/rng.hpp"
#include "floodsr/srnet.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace floodsr;

namespace {

NetConfig small_config() {
    NetConfig c;
    c.features = 4;
    c.blocks = 2;
    c.layers = 2;
    c.growth = 3;
    return c;
}

FractionGrid ramp_wfm(std::size_t n) {
    FractionGrid w(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) w(i, j) = static_cast<float>((i * 7 + j * 3) % 11) / 10.0f;
    }
    return w;
}

// Half-pixel-centred tent interpolation with edge clamping, written out
// directly: u = (o + 0.5) / f - 0.5 clamped into [0, n - 1].
double tent(const FractionGrid& w, int f, std::size_t r, std::size_t c) {
    auto coord = [f](std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1, double& t) {
        double u = (static_cast<double>(o) + 0.5) / f - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(n - 1));
        i0 = static_cast<std::size_t>(std::floor(u));
        i1 = std::min(i0 + 1, n - 1);
        t = u - static_cast<double>(i0);
    };
    std::size_t r0, r1, c0, c1;
    double tr, tc;
    coord(r, w.rows(), r0, r1, tr);
    coord(c, w.cols(), c0, c1, tc);
    const double top = (1 - tc) * w(r0, c0) + tc * w(r0, c1);
    const double bot = (1 - tc) * w(r1, c0) + tc * w(r1, c1);
    return (1 - tr) * top + tr * bot;
}

}  // namespace

TEST_CASE("init is seeded, biases start at zero") {
    const NetConfig cfg = small_config();
    const NetParams a = init_params(cfg, 5);
    const NetParams b = init_params(cfg, 5);
    const NetParams c = init_params(cfg, 6);
    REQUIRE(a.tensors.size() == b.tensors.size());
    bool differs = false;
    for (std::size_t t = 0; t < a.tensors.size(); ++t) {
        CHECK(a.tensors[t].values == b.tensors[t].values);
        differs = differs || a.tensors[t].values != c.tensors[t].values;
        const auto& name = a.tensors[t].name;
        if (name.ends_with(".b")) {
            CHECK(std::all_of(a.tensors[t].values.begin(), a.tensors[t].values.end(),
                              [](float v) { return v == 0.0f; }));
        }
    }
    CHECK(differs);
    CHECK(a.init_seed == 5);
}

TEST_CASE("init weight variance tracks 2 / fan_in") {
    // Default config: rdb0.conv7 sees 12 + 7 * 12 = 96 channels through a 3x3 kernel.
    const NetParams p = init_params(NetConfig{}, 11);
    const auto* t = p.find("rdb0.conv7.w");
    REQUIRE(t != nullptr);
    REQUIRE(t->values.size() == 12u * 96u * 9u);
    double sum = 0, sq = 0;
    for (float v : t->values) {
        sum += v;
        sq += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(t->values.size());
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    const double want = 2.0 / 864.0;
    CHECK(std::abs(var - want) < 0.2 * want);
}

TEST_CASE("parameter_count agrees with the allocated tensors") {
    for (bool att : {false, true}) {
        NetConfig cfg = small_config();
        cfg.attention = att;
        cfg.reduction = 2;
        CHECK(parameter_count(cfg) == init_params(cfg, 1).count());
    }
    CHECK(parameter_count(NetConfig{}) == init_params(NetConfig{}, 1).count());
}

TEST_CASE("doubling the block count adds a closed-form number of parameters") {
    for (int d : {1, 2, 4}) {
        NetConfig cfg = small_config();
        cfg.blocks = d;
        const long g0 = cfg.features, g = cfg.growth, c = cfg.layers, k2 = cfg.kernel * cfg.kernel;
        long block = 0;
        for (long i = 0; i < c; ++i) block += (g0 + i * g) * g * k2 + g;
        block += (g0 + c * g) * g0 + g0;
        // d extra blocks plus d * g0 more input channels into the 1x1 global fusion.
        const long extra = d * block + d * g0 * g0;
        NetConfig twice = cfg;
        twice.blocks = 2 * d;
        const long before = static_cast<long>(parameter_count(cfg));
        const long after = static_cast<long>(parameter_count(twice));
        CHECK(after - before == extra);
    }
}

TEST_CASE("validate rejects inconsistent shapes") {
    NetConfig c = small_config();
    CHECK_NOTHROW(validate(c));
    c.kernel = 4;
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = small_config();
    c.upsample = {2, 2};
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c.upsample = {};
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = small_config();
    c.blocks = 0;
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::InvalidConfig);
    c = small_config();
    c.attention = true;
    c.reduction = 3;
    CHECK(testing::kind_of([&] { validate(c); }) == ErrorKind::ChannelIndivisible);
    // The stock reduction of 16 cannot divide 12 features.
    NetConfig d;
    d.attention = true;
    CHECK(testing::kind_of([&] { validate(d); }) == ErrorKind::ChannelIndivisible);
    c = small_config();
    c.upsample = {10};
    CHECK_NOTHROW(validate(c));
}

TEST_CASE("forward output is 100x100, strictly inside (0, 1), repeatable") {
    NetConfig cfg = small_config();
    cfg.attention = true;
    cfg.reduction = 2;
    const NetParams p = init_params(cfg, 3);
    const FractionGrid w = ramp_wfm(10);
    const FractionGrid a = forward(w, p);
    const FractionGrid b = forward(w, p);
    REQUIRE(a.rows() == 100);
    REQUIRE(a.cols() == 100);
    CHECK(a == b);
    for (float v : a.cells()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("zeroed network reduces to the squashed bilinear path") {
    NetParams p = init_params(small_config(), 3);
    for (auto& t : p.tensors) std::fill(t.values.begin(), t.values.end(), 0.0f);
    const FractionGrid w = ramp_wfm(10);
    const FractionGrid out = forward(w, p);
    REQUIRE(out.rows() == 100);
    double worst = 0;
    for (std::size_t r = 0; r < 100; ++r) {
        for (std::size_t c = 0; c < 100; ++c) {
            const double want = 1.0 / (1.0 + std::exp(-tent(w, 10, r, c)));
            worst = std::max(worst, std::abs(out(r, c) - want));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("forward errors") {
    NetParams p = init_params(small_config(), 3);
    CHECK(testing::kind_of([&] { forward(FractionGrid{}, p); }) == ErrorKind::ShapeMismatch);
    NetParams cut = p;
    cut.tensors[3].values.pop_back();
    CHECK(testing::kind_of([&] { forward(ramp_wfm(10), cut); }) == ErrorKind::ShapeMismatch);
    NetParams huge = p;
    for (float& v : huge.find("sfe1.w")->values) v = 3e38f;
    for (float& v : huge.find("sfe2.w")->values) v = 3e38f;
    FractionGrid ones(10, 10, 1.0f);
    CHECK(testing::kind_of([&] { forward(ones, huge); }) == ErrorKind::NonFiniteActivation);
}

TEST_CASE("sub-pixel rearrangement") {
    Tensor<float> in(4, 5, 5);
    std::iota(in.data.begin(), in.data.end(), 0.0f);
    const Tensor<float> out = subpixel_rearrange(in, 2);
    CHECK(out.c == 1);
    CHECK(out.h == 10);
    CHECK(out.w == 10);

    Tensor<float> one(4, 1, 1);
    one.data = {1.0f, 2.0f, 3.0f, 4.0f};
    const Tensor<float> sq = subpixel_rearrange(one, 2);
    CHECK(sq(0, 0, 0) == 1.0f);
    CHECK(sq(0, 0, 1) == 2.0f);
    CHECK(sq(0, 1, 0) == 3.0f);
    CHECK(sq(0, 1, 1) == 4.0f);

    CHECK(subpixel_rearrange(in, 1).data == in.data);

    Tensor<double> big(50, 3, 4);
    Rng rng(2);
    for (double& v : big.data) v = rng.normal();
    const Tensor<double> up = subpixel_rearrange(big, 5);
    CHECK(up.c == 2);
    auto a = big.data, b = up.data;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    CHECK(subpixel_gather(up, 5).data == big.data);

    CHECK(testing::kind_of([&] { subpixel_rearrange(Tensor<float>(3, 2, 2), 2); }) ==
          ErrorKind::ChannelIndivisible);
}

TEST_CASE("channel attention") {
    const int ch = 4, mid = 2;
    Tensor<double> in(ch, 3, 3);
    Rng rng(9);
    for (double& v : in.data) v = rng.normal();
    std::vector<double> dw(mid * ch, 0.0), db(mid, 0.0), uw(ch * mid, 0.0), ub(ch, 0.0);
    AttentionWeights<double> zero{dw, db, uw, ub};
    const Tensor<double> half = channel_attention(in, 2, zero);
    CHECK(half.c == ch);
    CHECK(half.h == 3);
    CHECK(half.w == 3);
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(half.data[i] == doctest::Approx(0.5 * in.data[i]));

    // Channels 0 and 1 identical, their gate rows identical: gates must match.
    std::copy(in.channel(0), in.channel(0) + in.plane(), in.channel(1));
    for (double& v : dw) v = rng.normal();
    for (double& v : db) v = rng.normal();
    for (double& v : uw) v = rng.normal();
    for (double& v : ub) v = rng.normal();
    // down_w columns 0 and 1 are free; up_w rows 0 and 1 must agree.
    uw[1 * mid + 0] = uw[0 * mid + 0];
    uw[1 * mid + 1] = uw[0 * mid + 1];
    ub[1] = ub[0];
    AttentionCache<double> cache;
    channel_attention(in, 2, AttentionWeights<double>{dw, db, uw, ub}, &cache);
    CHECK(cache.gate[0] == cache.gate[1]);
    for (double g : cache.gate) {
        CHECK(g > 0.0);
        CHECK(g < 1.0);
    }

    CHECK(testing::kind_of([&] { channel_attention(in, 3, zero); }) == ErrorKind::ChannelIndivisible);
}

TEST_CASE("checkpoint roundtrip is bit-exact and config-checked") {
    testing::TempDir dir("ckpt");
    NetConfig cfg = small_config();
    cfg.attention = true;
    cfg.reduction = 2;
    NetParams p = init_params(cfg, 21);
    p.train_seed = 77;
    p.tensors[1].values[0] = std::numeric_limits<float>::denorm_min();
    p.tensors[0].values[0] = -0.0f;
    save_checkpoint(p, dir / "m.ckpt");
    const NetParams q = load_checkpoint(dir / "m.ckpt", cfg);
    CHECK(q.config == cfg);
    CHECK(q.init_seed == 21);
    CHECK(q.train_seed == 77);
    REQUIRE(q.tensors.size() == p.tensors.size());
    for (std::size_t t = 0; t < p.tensors.size(); ++t) {
        CHECK(q.tensors[t].name == p.tensors[t].name);
        CHECK(q.tensors[t].shape == p.tensors[t].shape);
        CHECK(std::memcmp(q.tensors[t].values.data(), p.tensors[t].values.data(),
                          p.tensors[t].values.size() * sizeof(float)) == 0);
    }
    save_checkpoint(q, dir / "again.ckpt");
    CHECK(testing::slurp(dir / "m.ckpt") == testing::slurp(dir / "again.ckpt"));

    NetConfig other = cfg;
    other.growth = 4;
    CHECK(testing::kind_of([&] { load_checkpoint(dir / "m.ckpt", other); }) == ErrorKind::ConfigMismatch);

    auto bytes = testing::slurp(dir / "m.ckpt");
    testing::spit(dir / "short.ckpt", bytes.substr(0, bytes.size() - 3));
    CHECK(testing::kind_of([&] { load_checkpoint(dir / "short.ckpt"); }) != ErrorKind::ConfigMismatch);
    CHECK(testing::kind_of([&] { load_checkpoint(dir / "missing.ckpt"); }) == ErrorKind::IoFailure);
}

TEST_CASE("analytic gradient matches central differences on the tiny net") {
    const auto r = gradcheck::run(7);
    REQUIRE(r.samples.size() == 50);
    // Every tensor (so every layer type) is represented.
    const auto p = init_params(gradcheck::tiny_config(), 7);
    for (const auto& t : p.tensors) {
        const bool seen = std::any_of(r.samples.begin(), r.samples.end(),
                                      [&](const gradcheck::Sample& s) { return s.tensor == t.name; });
        CHECK_MESSAGE(seen, t.name);
    }
    for (const auto& s : r.samples) {
        CHECK_MESSAGE(s.rel < 1e-4, s.tensor, "[", s.index, "] analytic ", s.analytic, " numeric ", s.numeric);
    }
}
