#include "floodsr/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "floodsr/raster_io.hpp"
#include "floodsr/rng.hpp"
#include "floodsr/wfm_ops.hpp"

namespace floodsr {

namespace {

bool is_pow2_plus_one(std::size_t n) {
    if (n < 3) return false;
    const std::size_t m = n - 1;
    return (m & (m - 1)) == 0;
}

constexpr std::uint64_t kCarveStream = 0xC4A7'0000'0000'0001ull;
constexpr std::uint64_t kSplitStream = 0x5917'0000'0000'0002ull;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

Split assign_split(std::uint64_t seed, std::size_t row0, std::size_t col0, const SplitFractions& split) {
    const std::uint64_t h = mix64(mix64(seed ^ kSplitStream) ^ mix64(row0 * 0x10001ull + col0));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    if (u < split.train) return Split::train;
    if (u < split.train + split.val) return Split::val;
    return Split::test;
}

// Appends the cells of one meandering path from one edge to the opposite one.
void trace_path(std::size_t n, double margin, Rng& rng, std::vector<std::pair<std::size_t, std::size_t>>& cells) {
    const bool vertical = rng.uniform() < 0.5;
    const double lo = margin;
    const double hi = static_cast<double>(n - 1) - margin;
    double pos = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
    double heading = 0.0;
    long prev = std::lround(pos);
    for (std::size_t along = 0; along < n; ++along) {
        heading = 0.985 * heading + 0.12 * rng.normal();
        pos += heading;
        if (pos < lo) {
            pos = lo;
            heading = std::abs(heading);
        } else if (pos > hi) {
            pos = hi;
            heading = -std::abs(heading);
        }
        const long cur = std::lround(pos);
        const long a = along == 0 ? cur : std::min(prev, cur);
        const long b = along == 0 ? cur : std::max(prev, cur);
        for (long across = a; across <= b; ++across) {
            const auto c = static_cast<std::size_t>(across);
            cells.emplace_back(vertical ? along : c, vertical ? c : along);
        }
        prev = cur;
    }
}

}  // namespace

void validate(const TerrainConfig& config) {
    if (!is_pow2_plus_one(config.size) || config.size < 33) {
        fail(ErrorKind::BadSize, "terrain size must be 2^n + 1 with n >= 5, got " + std::to_string(config.size));
    }
    if (!std::isfinite(config.roughness) || config.roughness <= 0.0 || config.roughness > 1.0) {
        fail(ErrorKind::InvalidConfig, "roughness must lie in (0, 1]");
    }
    if (!std::isfinite(config.channel_depth) || config.channel_depth <= 0.0) {
        fail(ErrorKind::InvalidConfig, "channel_depth must be positive");
    }
    if (!std::isfinite(config.channel_width) || config.channel_width <= 0.0) {
        fail(ErrorKind::InvalidConfig, "channel_width must be positive");
    }
    if (config.channel_count == 0) fail(ErrorKind::InvalidConfig, "channel_count must be >= 1");
}

void validate(const FloodScenario& scenario) {
    if (scenario.stages.empty()) fail(ErrorKind::InvalidConfig, "flood scenario has no stages");
    for (std::size_t k = 0; k < scenario.stages.size(); ++k) {
        const double s = scenario.stages[k];
        if (!std::isfinite(s) || s < 0.0) fail(ErrorKind::InvalidConfig, "stages must be finite and >= 0");
        if (k > 0 && !(s > scenario.stages[k - 1])) {
            fail(ErrorKind::InvalidConfig, "stages must be strictly increasing");
        }
    }
}

void validate(const SplitFractions& split) {
    if (split.train < 0.0 || split.val < 0.0 || split.test < 0.0 ||
        std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
        fail(ErrorKind::InvalidConfig, "split fractions must be non-negative and sum to 1");
    }
}

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    fail(ErrorKind::InvalidConfig, "unknown split '" + name + "'");
}

std::vector<TileRecord> DatasetManifest::select(Split split) const {
    std::vector<TileRecord> out;
    for (const auto& t : tiles) {
        if (t.split == split) out.push_back(t);
    }
    return out;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["seed"] = manifest.seed;
    doc["config_hash"] = manifest.config_hash;
    auto tiles = nlohmann::ordered_json::array();
    for (const auto& t : manifest.tiles) {
        nlohmann::ordered_json rec;
        rec["fim"] = t.fim;
        rec["wfm"] = t.wfm;
        rec["stage"] = t.stage;
        rec["row0"] = t.row0;
        rec["col0"] = t.col0;
        rec["split"] = to_string(t.split);
        tiles.push_back(std::move(rec));
    }
    doc["tiles"] = std::move(tiles);
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot create " + path.string());
    out << doc.dump(1) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
    DatasetManifest m;
    try {
        const auto doc = nlohmann::json::parse(in);
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.config_hash = doc.at("config_hash").get<std::string>();
        for (const auto& rec : doc.at("tiles")) {
            TileRecord t;
            t.fim = rec.at("fim").get<std::string>();
            t.wfm = rec.at("wfm").get<std::string>();
            t.stage = rec.at("stage").get<double>();
            t.row0 = rec.at("row0").get<std::size_t>();
            t.col0 = rec.at("col0").get<std::size_t>();
            t.split = split_from_string(rec.at("split").get<std::string>());
            m.tiles.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedHeader, "bad manifest " + path.string() + ": " + e.what());
    }
    m.root = path.parent_path();
    return m;
}

ElevationGrid generate_dem(const TerrainConfig& config) {
    validate(config);
    const std::size_t n = config.size;
    Rng rng(config.seed);
    std::vector<double> h(n * n, 0.0);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return h[i * n + j]; };

    at(0, 0) = rng.uniform(-1.0, 1.0);
    at(0, n - 1) = rng.uniform(-1.0, 1.0);
    at(n - 1, 0) = rng.uniform(-1.0, 1.0);
    at(n - 1, n - 1) = rng.uniform(-1.0, 1.0);

    double amplitude = 1.0;
    for (std::size_t step = n - 1; step > 1; step /= 2) {
        const std::size_t half = step / 2;
        // Diamond: square centres.
        for (std::size_t i = half; i < n; i += step) {
            for (std::size_t j = half; j < n; j += step) {
                const double avg =
                    0.25 * (at(i - half, j - half) + at(i - half, j + half) + at(i + half, j - half) +
                            at(i + half, j + half));
                at(i, j) = avg + amplitude * rng.uniform(-1.0, 1.0);
            }
        }
        // Square: edge midpoints, averaging whichever neighbours exist.
        for (std::size_t i = 0; i < n; i += half) {
            for (std::size_t j = (i / half) % 2 == 0 ? half : 0; j < n; j += step) {
                double sum = 0.0;
                int count = 0;
                if (i >= half) { sum += at(i - half, j); ++count; }
                if (i + half < n) { sum += at(i + half, j); ++count; }
                if (j >= half) { sum += at(i, j - half); ++count; }
                if (j + half < n) { sum += at(i, j + half); ++count; }
                at(i, j) = sum / count + amplitude * rng.uniform(-1.0, 1.0);
            }
        }
        amplitude *= config.roughness;
    }

    const auto [lo_it, hi_it] = std::minmax_element(h.begin(), h.end());
    const double lo = *lo_it;
    const double span = *hi_it - lo;
    ElevationGrid dem(n, n);
    for (std::size_t k = 0; k < h.size(); ++k) {
        dem[k] = span > 0.0 ? static_cast<float>((h[k] - lo) / span) : 0.0f;
    }
    return dem;
}

CarvedTerrain carve_channel(const ElevationGrid& dem, const TerrainConfig& config) {
    validate(config);
    if (dem.rows() != dem.cols() || dem.rows() < 2) {
        fail(ErrorKind::ShapeMismatch, "carve_channel expects a square elevation grid");
    }
    const std::size_t n = dem.rows();
    Rng rng(mix64(config.seed ^ kCarveStream));

    const double sigma = 0.5 * config.channel_width;
    const int radius = static_cast<int>(std::ceil(2.0 * config.channel_width));
    const double margin = std::min(static_cast<double>(n) / 4.0, config.channel_width);

    std::vector<double> lowering(n * n, 0.0);
    BinaryGrid mask(n, n, 0);
    std::vector<std::pair<std::size_t, std::size_t>> path;
    for (std::size_t c = 0; c < config.channel_count; ++c) {
        path.clear();
        trace_path(n, margin, rng, path);
        for (const auto& [pi, pj] : path) {
            mask(pi, pj) = 1;
            for (int di = -radius; di <= radius; ++di) {
                const long i = static_cast<long>(pi) + di;
                if (i < 0 || i >= static_cast<long>(n)) continue;
                for (int dj = -radius; dj <= radius; ++dj) {
                    const long j = static_cast<long>(pj) + dj;
                    if (j < 0 || j >= static_cast<long>(n)) continue;
                    const double d2 = static_cast<double>(di * di + dj * dj);
                    const double cut = config.channel_depth * std::exp(-0.5 * d2 / (sigma * sigma));
                    double& slot = lowering[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)];
                    slot = std::max(slot, cut);
                }
            }
        }
    }

    ElevationGrid carved(n, n);
    for (std::size_t k = 0; k < carved.size(); ++k) {
        carved[k] = static_cast<float>(static_cast<double>(dem[k]) - lowering[k]);
    }
    return {std::move(carved), std::move(mask)};
}

BinaryGrid inundate(const ElevationGrid& dem, const BinaryGrid& channel_mask, double stage) {
    require_same_shape(dem, channel_mask, "inundate");
    const std::size_t rows = dem.rows();
    const std::size_t cols = dem.cols();
    BinaryGrid wet(rows, cols, 0);

    double channel_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < dem.size(); ++k) {
        if (channel_mask[k]) channel_min = std::min(channel_min, static_cast<double>(dem[k]));
    }
    if (!std::isfinite(channel_min)) return wet;
    const double waterline = channel_min + stage;

    std::deque<std::size_t> frontier;
    for (std::size_t k = 0; k < dem.size(); ++k) {
        if (channel_mask[k] && static_cast<double>(dem[k]) <= waterline) {
            wet[k] = 1;
            frontier.push_back(k);
        }
    }
    while (!frontier.empty()) {
        const std::size_t k = frontier.front();
        frontier.pop_front();
        const std::size_t i = k / cols;
        const std::size_t j = k % cols;
        auto visit = [&](std::size_t nk) {
            if (!wet[nk] && static_cast<double>(dem[nk]) <= waterline) {
                wet[nk] = 1;
                frontier.push_back(nk);
            }
        };
        if (i > 0) visit(k - cols);
        if (i + 1 < rows) visit(k + cols);
        if (j > 0) visit(k - 1);
        if (j + 1 < cols) visit(k + 1);
    }
    return wet;
}

std::string config_hash(const TerrainConfig& terrain, const FloodScenario& scenario,
                        const DatasetOptions& options) {
    std::ostringstream canon;
    canon.precision(17);
    canon << "seed=" << terrain.seed << ";size=" << terrain.size << ";roughness=" << terrain.roughness
          << ";channels=" << terrain.channel_count << ";depth=" << terrain.channel_depth
          << ";width=" << terrain.channel_width << ";stages=";
    for (double s : scenario.stages) canon << s << ',';
    canon << ";split=" << options.split.train << ',' << options.split.val << ',' << options.split.test
          << ";min_band=" << options.min_band_pixels << ";band=" << options.band.lo << ','
          << options.band.hi << ";tile=" << options.tile_size << ";f=" << options.scale.f;
    return hex64(fnv1a(canon.str()));
}

DatasetManifest build_dataset(const TerrainConfig& terrain, const FloodScenario& scenario,
                              const std::filesystem::path& out_dir, const DatasetOptions& options) {
    validate(terrain);
    validate(scenario);
    validate(options.split);
    validate(options.band);
    validate(options.scale);
    const std::size_t tsize = options.tile_size;
    if (tsize == 0 || tsize % static_cast<std::size_t>(options.scale.f) != 0) {
        fail(ErrorKind::IndivisibleDimensions, "tile size must be a multiple of the scale factor");
    }
    if (terrain.size < tsize) fail(ErrorKind::BadSize, "terrain smaller than one tile");

    const auto carved = carve_channel(generate_dem(terrain), terrain);
    const std::size_t extent = (terrain.size / tsize) * tsize;

    std::filesystem::create_directories(out_dir / "fim");
    std::filesystem::create_directories(out_dir / "wfm");
    if (options.write_dem) write_fraction_grid(crop(carved.dem, extent, extent), out_dir / "dem.wfg");

    DatasetManifest manifest;
    manifest.seed = terrain.seed;
    manifest.config_hash = config_hash(terrain, scenario, options);
    manifest.root = out_dir;

    for (std::size_t si = 0; si < scenario.stages.size(); ++si) {
        const double stage = scenario.stages[si];
        const auto fim = crop(inundate(carved.dem, carved.channel_mask, stage), extent, extent);
        for (auto& piece : tile(fim, tsize, tsize)) {
            const auto wfm = aggregate(piece.grid, options.scale);
            std::size_t in_band = 0;
            for (float v : wfm.cells()) in_band += options.band.contains(v) ? 1 : 0;
            if (in_band < options.min_band_pixels) continue;

            char stem[64];
            std::snprintf(stem, sizeof stem, "s%02zu_r%05zu_c%05zu", si, piece.row0, piece.col0);
            TileRecord rec;
            rec.fim = std::string("fim/") + stem + ".pgm";
            rec.wfm = std::string("wfm/") + stem + ".wfg";
            rec.stage = stage;
            rec.row0 = piece.row0;
            rec.col0 = piece.col0;
            rec.split = assign_split(terrain.seed, piece.row0, piece.col0, options.split);
            write_binary_grid(piece.grid, out_dir / rec.fim);
            write_fraction_grid(wfm, out_dir / rec.wfm);
            manifest.tiles.push_back(std::move(rec));
        }
    }
    if (manifest.tiles.empty()) fail(ErrorKind::EmptyDataset, "no tile met the band filter");
    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

}  // namespace floodsr
