#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "floodsr/srnet.hpp"
#include "floodsr/synthgen.hpp"

namespace floodsr {

/// total = ace + eta * penalty
struct LossBreakdown {
    double ace = 0.0;
    double penalty = 0.0;
    double eta = 0.0;
    double total = 0.0;
};

/// Penalized average cross-entropy. ace is the negative mean log-likelihood
/// over the clipped probabilities; penalty is the unnormalized sum over WFM
/// cells of (X - patch mean of S)^2.
LossBreakdown loss_pace(const BinaryGrid& truth, const FractionGrid& prob, const FractionGrid& wfm, double eta,
                        ScaleFactor scale = ScaleFactor{}, double clip = 1e-7);

/// Same loss, also writing dLoss/dS into dprob when non-null.
template <typename T>
LossBreakdown loss_pace(const BinaryGrid& truth, std::span<const T> prob, const FractionGrid& wfm, double eta,
                        ScaleFactor scale, double clip, std::vector<T>* dprob);

/// Backpropagates the loss of a completed forward pass; accumulates into grads.
template <typename T>
LossBreakdown grad_loss(const BinaryGrid& truth, const ForwardTrace<T>& trace, const FractionGrid& wfm,
                        const BasicNetParams<T>& params, double eta, double clip, GradSet<T>& grads);

struct TrainConfig {
    double eta = 100.0;
    double lr0 = 1e-4;
    double decay = 0.97;
    int epochs = 60;
    int batch = 1;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip = 1e-7;
};

void validate(const TrainConfig& config);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;
};

/// Bias-corrected Adam. grads are the (already batch-averaged) gradients.
template <typename T>
void adam_step(BasicNetParams<T>& params, const GradSet<T>& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    LossBreakdown train;
    LossBreakdown val;
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val_total = 0.0;
    NetParams best;
};

struct TrainingTile {
    BinaryGrid fim;
    FractionGrid wfm;
};

std::vector<TrainingTile> load_tiles(const DatasetManifest& manifest, Split split);

/// Mean loss over tiles (forward only).
LossBreakdown evaluate_loss(const NetParams& params, std::span<const TrainingTile> tiles, double eta,
                            double clip = 1e-7);

/// Deterministic Adam training with per-epoch exponential decay; the
/// lowest-validation-total parameters are kept and written to ckpt_out.
TrainResult train(const DatasetManifest& manifest, const NetConfig& net, const TrainConfig& config,
                  const std::filesystem::path& ckpt_out, const std::filesystem::path& log_out = {});

/// Same loop over pre-loaded tiles (no files written when paths are empty).
TrainResult train(std::span<const TrainingTile> train_tiles, std::span<const TrainingTile> val_tiles,
                  const NetConfig& net, const TrainConfig& config, const std::filesystem::path& ckpt_out = {},
                  const std::filesystem::path& log_out = {});

void write_epoch_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

struct IntLattice {
    int lo = 0;
    int hi = 0;
    int step = 1;

    std::vector<int> values() const;
};

struct SearchSpace {
    double eta_lo = 0.0;
    double eta_hi = 2000.0;
    double lr_lo = 1e-5;
    double lr_hi = 1e-4;
    IntLattice blocks{2, 16, 2};
    IntLattice layers{2, 32, 2};
    IntLattice features{8, 64, 8};
    IntLattice growth{8, 64, 8};
    int budget = 8;
    std::uint64_t seed = 1;
};

void validate(const SearchSpace& space);

struct Trial {
    int index = 0;
    NetConfig net;
    TrainConfig train;
    double val_total = 0.0;
};

struct SearchResult {
    std::vector<Trial> trials;
    std::size_t best = 0;
};

/// Seeded uniform sampling over the space; every trial reuses `base` for
/// the unsearched fields and trains for epochs_per_trial epochs.
SearchResult random_search(const SearchSpace& space, const DatasetManifest& manifest, int epochs_per_trial,
                           const TrainConfig& base_train = TrainConfig{}, const NetConfig& base_net = NetConfig{},
                           const std::filesystem::path& out_dir = {});

void write_trial_table(const SearchResult& result, const std::filesystem::path& path);

}  // namespace floodsr
