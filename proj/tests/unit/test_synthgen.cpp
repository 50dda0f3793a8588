#include <algorithm>
#include <map>
#include <queue>

#include "floodsr/raster_io.hpp"
#include "floodsr/synthgen.hpp"
#include "floodsr/wfm_ops.hpp"
#include "support.hpp"

using namespace floodsr;
using testing::TempDir;

namespace {

TerrainConfig small_terrain(std::uint64_t seed = 1) {
    TerrainConfig t;
    t.seed = seed;
    t.size = 257;
    t.channel_count = 2;
    t.channel_width = 6.0;
    return t;
}

// Labels 4-connected components of the set cells; returns labels (0 = unset).
std::vector<int> components(const BinaryGrid& g) {
    std::vector<int> label(g.size(), 0);
    int next = 0;
    for (std::size_t s = 0; s < g.size(); ++s) {
        if (!g[s] || label[s]) continue;
        ++next;
        std::vector<std::size_t> stack{s};
        label[s] = next;
        while (!stack.empty()) {
            const auto k = stack.back();
            stack.pop_back();
            const std::size_t i = k / g.cols();
            const std::size_t j = k % g.cols();
            const std::size_t nb[4] = {i > 0 ? k - g.cols() : k, i + 1 < g.rows() ? k + g.cols() : k,
                                       j > 0 ? k - 1 : k, j + 1 < g.cols() ? k + 1 : k};
            for (auto m : nb) {
                if (g[m] && !label[m]) {
                    label[m] = next;
                    stack.push_back(m);
                }
            }
        }
    }
    return label;
}

}  // namespace

TEST_CASE("dem generation is seeded and normalized") {
    const auto a = generate_dem(small_terrain(1));
    const auto b = generate_dem(small_terrain(1));
    const auto c = generate_dem(small_terrain(2));
    CHECK(a == b);
    CHECK_FALSE(a == c);
    const auto [lo, hi] = std::minmax_element(a.cells().begin(), a.cells().end());
    CHECK(*lo == 0.0f);
    CHECK(*hi == 1.0f);
    CHECK(a.rows() == 257);
}

TEST_CASE("terrain config validation") {
    auto t = small_terrain();
    t.size = 1000;
    CHECK(testing::kind_of([&] { generate_dem(t); }) == ErrorKind::BadSize);
    t.size = 17;
    CHECK(testing::kind_of([&] { generate_dem(t); }) == ErrorKind::BadSize);
    t = small_terrain();
    t.channel_depth = 0.0;
    CHECK(testing::kind_of([&] { validate(t); }) == ErrorKind::InvalidConfig);
    t = small_terrain();
    t.roughness = 1.5;
    CHECK(testing::kind_of([&] { validate(t); }) == ErrorKind::InvalidConfig);
    CHECK(testing::kind_of([] { validate(FloodScenario{{0.1, 0.1}}); }) == ErrorKind::InvalidConfig);
    CHECK(testing::kind_of([] { validate(FloodScenario{{-0.1}}); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("carved channels lower the terrain and span the grid") {
    auto t = small_terrain();
    t.channel_count = 1;
    const auto dem = generate_dem(t);
    const auto carved = carve_channel(dem, t);
    std::size_t path_cells = 0;
    for (std::size_t k = 0; k < dem.size(); ++k) {
        CHECK(carved.dem[k] <= dem[k]);
        if (carved.channel_mask[k]) {
            ++path_cells;
            CHECK(carved.dem[k] < dem[k]);
        }
    }
    CHECK(path_cells >= t.size);

    // One component reaching two opposite edges.
    const auto label = components(carved.channel_mask);
    const std::size_t n = t.size;
    bool spans = false;
    for (std::size_t a = 0; a < n && !spans; ++a) {
        for (std::size_t b = 0; b < n && !spans; ++b) {
            const int top = label[a];
            const int left = label[a * n];
            spans = (top && top == label[(n - 1) * n + b]) || (left && left == label[b * n + n - 1]);
        }
    }
    CHECK(spans);
}

TEST_CASE("inundation examples") {
    ElevationGrid flat(6, 6, 0.0f);
    BinaryGrid channel(6, 6, 0);
    channel(2, 2) = 1;
    CHECK(count_ones(inundate(flat, channel, 0.1)) == 36);

    // channel in column 0, ridge in column 2, depressed basin in columns 3-4
    ElevationGrid dem(5, 5, std::vector<float>{
        0.0f, 0.2f, 1.0f, 0.0f, 0.0f,
        0.0f, 0.2f, 1.0f, 0.0f, 0.0f,
        0.0f, 0.2f, 1.0f, 0.0f, 0.0f,
        0.0f, 0.2f, 1.0f, 0.0f, 0.0f,
        0.0f, 0.2f, 1.0f, 0.0f, 0.0f});
    BinaryGrid ch(5, 5, 0);
    for (std::size_t i = 0; i < 5; ++i) ch(i, 0) = 1;
    const auto wet = inundate(dem, ch, 0.5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(wet(i, 0) == 1);
        CHECK(wet(i, 1) == 1);
        CHECK(wet(i, 2) == 0);
        CHECK(wet(i, 3) == 0);
        CHECK(wet(i, 4) == 0);
    }
    // at stage 0 only cells level with the thalweg flood
    const auto low = inundate(dem, ch, 0.0);
    CHECK(count_ones(low) == 5);
    CHECK(testing::kind_of([&] { inundate(dem, BinaryGrid(4, 4), 0.1); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("flooding is monotone in stage and every wet cell reaches a channel") {
    const auto t = small_terrain(5);
    const auto carved = carve_channel(generate_dem(t), t);
    BinaryGrid prev(t.size, t.size, 0);
    for (double stage : {0.0, 0.05, 0.1, 0.2, 0.4}) {
        const auto wet = inundate(carved.dem, carved.channel_mask, stage);
        for (std::size_t k = 0; k < wet.size(); ++k) CHECK(wet[k] >= prev[k]);
        // independent pass: each wet component contains a wet channel cell
        const auto label = components(wet);
        std::map<int, bool> touches;
        for (std::size_t k = 0; k < wet.size(); ++k) {
            if (wet[k]) touches[label[k]] = touches[label[k]] || carved.channel_mask[k];
        }
        for (const auto& [id, ok] : touches) CHECK(ok);
        prev = wet;
    }
}

TEST_CASE("dataset tiles obey exact fraction matching and determinism") {
    TempDir a("syn");
    TempDir b("syn");
    auto t = small_terrain(3);
    t.size = 513;
    const FloodScenario sc{{0.05, 0.15, 0.3}};
    DatasetOptions opt;
    opt.min_band_pixels = 3;
    const auto m = build_dataset(t, sc, a.path(), opt);
    REQUIRE_FALSE(m.tiles.empty());

    std::map<std::pair<std::size_t, std::size_t>, Split> split_of;
    for (const auto& rec : m.tiles) {
        const auto fim = read_binary_grid(m.fim_path(rec));
        const auto wfm = read_fraction_grid(m.wfm_path(rec));
        CHECK(fim.rows() == 100);
        CHECK(wfm.rows() == 10);
        CHECK(aggregate(fim) == wfm);
        std::size_t in_band = 0;
        for (float v : wfm.cells()) in_band += (v > 0.25 && v < 0.85);
        CHECK(in_band >= 3);
        const auto key = std::make_pair(rec.row0, rec.col0);
        if (split_of.count(key)) CHECK(split_of[key] == rec.split);
        split_of[key] = rec.split;
    }

    build_dataset(t, sc, b.path(), opt);
    CHECK(testing::slurp(a / "manifest.json") == testing::slurp(b / "manifest.json"));
    for (const auto& rec : m.tiles) {
        CHECK(testing::slurp(a / rec.fim) == testing::slurp(b / rec.fim));
        CHECK(testing::slurp(a / rec.wfm) == testing::slurp(b / rec.wfm));
    }

    const auto back = load_manifest(a / "manifest.json");
    CHECK(back.seed == m.seed);
    CHECK(back.config_hash == m.config_hash);
    REQUIRE(back.tiles.size() == m.tiles.size());
    CHECK(back.tiles.front().fim == m.tiles.front().fim);
    CHECK(back.tiles.back().split == m.tiles.back().split);
}

TEST_CASE("no band filter keeps every tile") {
    TempDir d("syn");
    auto t = small_terrain(4);
    t.size = 1025;
    DatasetOptions opt;
    opt.min_band_pixels = 0;
    opt.write_dem = false;
    const auto m = build_dataset(t, FloodScenario{{0.1, 0.2}}, d.path(), opt);
    CHECK(m.tiles.size() == 2 * 100);
}

TEST_CASE("unsatisfiable filter reports an empty dataset") {
    TempDir d("syn");
    DatasetOptions opt;
    opt.min_band_pixels = 101;
    CHECK(testing::kind_of([&] { build_dataset(small_terrain(), FloodScenario{{0.1}}, d.path(), opt); }) ==
          ErrorKind::EmptyDataset);
}

TEST_CASE("config hash tracks every input") {
    const auto t = small_terrain();
    const FloodScenario sc{{0.1}};
    const DatasetOptions opt;
    auto t2 = t;
    t2.seed = 2;
    CHECK(config_hash(t, sc, opt) == config_hash(t, sc, opt));
    CHECK(config_hash(t, sc, opt) != config_hash(t2, sc, opt));
    CHECK(config_hash(t, sc, opt) != config_hash(t, FloodScenario{{0.2}}, opt));
}
