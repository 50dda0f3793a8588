#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "floodsr/grid.hpp"

namespace floodsr {

/// Procedural terrain with carved river channels.
struct TerrainConfig {
    std::uint64_t seed = 1;
    std::size_t size = 1025;     // 2^n + 1, n >= 5
    double roughness = 0.55;     // per-level amplitude decay of the fractal
    std::size_t channel_count = 3;
    double channel_depth = 0.2;  // maximum lowering, normalized elevation units
    double channel_width = 12.0; // cross-section half-width in cells
};

void validate(const TerrainConfig& config);

/// Water-surface offsets above the lowest channel cell, strictly increasing.
struct FloodScenario {
    std::vector<double> stages;
};

void validate(const FloodScenario& scenario);

enum class Split { train, val, test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct SplitFractions {
    double train = 0.7;
    double val = 0.15;
    double test = 0.15;
};

void validate(const SplitFractions& split);

struct TileRecord {
    std::string fim;   // relative to the manifest directory
    std::string wfm;
    double stage = 0.0;
    std::size_t row0 = 0;
    std::size_t col0 = 0;
    Split split = Split::train;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<TileRecord> tiles;
    std::filesystem::path root;  // directory the relative paths resolve against

    std::filesystem::path fim_path(const TileRecord& t) const { return root / t.fim; }
    std::filesystem::path wfm_path(const TileRecord& t) const { return root / t.wfm; }
    std::vector<TileRecord> select(Split split) const;
};

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Diamond-square surface renormalized to [0, 1].
ElevationGrid generate_dem(const TerrainConfig& config);

struct CarvedTerrain {
    ElevationGrid dem;
    BinaryGrid channel_mask;
};

/// Carves config.channel_count meandering channels, each a 4-connected path
/// joining two opposite edges, with a Gaussian cross-section.
CarvedTerrain carve_channel(const ElevationGrid& dem, const TerrainConfig& config);

/// Bathtub flood: wet iff at or below (channel minimum + stage) and
/// 4-connected through wet cells to a channel cell.
BinaryGrid inundate(const ElevationGrid& dem, const BinaryGrid& channel_mask, double stage);

struct DatasetOptions {
    SplitFractions split;
    std::size_t min_band_pixels = 10;
    BandLimits band;
    std::size_t tile_size = 100;
    ScaleFactor scale{10};
    bool write_dem = true;
};

std::string config_hash(const TerrainConfig& terrain, const FloodScenario& scenario,
                        const DatasetOptions& options);

/// Generates terrain, floods every stage, tiles, filters by band content,
/// writes FIM/WFM pairs plus manifest.json into out_dir.
DatasetManifest build_dataset(const TerrainConfig& terrain, const FloodScenario& scenario,
                              const std::filesystem::path& out_dir,
                              const DatasetOptions& options = DatasetOptions{});

}  // namespace floodsr
