#include "floodsr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "floodsr/checkpoint.hpp"
#include "floodsr/raster_io.hpp"
#include "floodsr/rng.hpp"
#include "fpmode.hpp"

namespace floodsr {

namespace {

constexpr std::uint64_t kInitStream = 0x1417'0000'0000'0003ull;
constexpr std::uint64_t kShuffleStream = 0x54FF'0000'0000'0004ull;

LossBreakdown& accumulate(LossBreakdown& acc, const LossBreakdown& x) {
    acc.ace += x.ace;
    acc.penalty += x.penalty;
    acc.total += x.total;
    acc.eta = x.eta;
    return acc;
}

LossBreakdown mean_of(LossBreakdown acc, std::size_t n) {
    if (n == 0) return acc;
    acc.ace /= static_cast<double>(n);
    acc.penalty /= static_cast<double>(n);
    acc.total /= static_cast<double>(n);
    return acc;
}

}  // namespace

template <typename T>
LossBreakdown loss_pace(const BinaryGrid& truth, std::span<const T> prob, const FractionGrid& wfm, double eta,
                        ScaleFactor scale, double clip, std::vector<T>* dprob) {
    validate(scale);
    const auto f = static_cast<std::size_t>(scale.f);
    if (prob.size() != truth.size() || truth.rows() != wfm.rows() * f || truth.cols() != wfm.cols() * f) {
        fail(ErrorKind::ShapeMismatch, "loss: FIM, probability map and WFM shapes are inconsistent");
    }
    const std::size_t cols = truth.cols();
    const double n = static_cast<double>(truth.size());
    if (dprob) dprob->assign(prob.size(), T{0});

    double ll = 0.0;
    for (std::size_t k = 0; k < prob.size(); ++k) {
        const double raw = static_cast<double>(prob[k]);
        const double s = std::clamp(raw, clip, 1.0 - clip);
        const bool wet = truth[k] != 0;
        ll += wet ? std::log(s) : std::log1p(-s);
        if (dprob && raw == s) {
            (*dprob)[k] = static_cast<T>(wet ? -1.0 / (s * n) : 1.0 / ((1.0 - s) * n));
        }
    }

    const double area = static_cast<double>(f * f);
    double penalty = 0.0;
    for (std::size_t i = 0; i < wfm.rows(); ++i) {
        for (std::size_t j = 0; j < wfm.cols(); ++j) {
            double sum = 0.0;
            for (std::size_t a = 0; a < f; ++a) {
                for (std::size_t b = 0; b < f; ++b) sum += static_cast<double>(prob[(f * i + a) * cols + f * j + b]);
            }
            const double diff = static_cast<double>(wfm(i, j)) - sum / area;
            penalty += diff * diff;
            if (dprob && eta != 0.0) {
                const double d = -2.0 * eta * diff / area;
                for (std::size_t a = 0; a < f; ++a) {
                    for (std::size_t b = 0; b < f; ++b) (*dprob)[(f * i + a) * cols + f * j + b] += static_cast<T>(d);
                }
            }
        }
    }

    LossBreakdown out;
    out.ace = -ll / n;
    out.penalty = penalty;
    out.eta = eta;
    out.total = eta == 0.0 ? out.ace : out.ace + eta * penalty;
    return out;
}

LossBreakdown loss_pace(const BinaryGrid& truth, const FractionGrid& prob, const FractionGrid& wfm, double eta,
                        ScaleFactor scale, double clip) {
    require_same_shape(truth, prob, "loss");
    return loss_pace<float>(truth, std::span<const float>(prob.cells()), wfm, eta, scale, clip, nullptr);
}

template <typename T>
LossBreakdown grad_loss(const BinaryGrid& truth, const ForwardTrace<T>& trace, const FractionGrid& wfm,
                        const BasicNetParams<T>& params, double eta, double clip, GradSet<T>& grads) {
    std::vector<T> dprob;
    const LossBreakdown loss = loss_pace<T>(truth, std::span<const T>(trace.prob.data), wfm, eta,
                                            ScaleFactor(upsample_product(params.config)), clip, &dprob);
    backward(trace, params, std::span<const T>(dprob), grads);
    return loss;
}

template LossBreakdown loss_pace<float>(const BinaryGrid&, std::span<const float>, const FractionGrid&, double,
                                        ScaleFactor, double, std::vector<float>*);
template LossBreakdown loss_pace<double>(const BinaryGrid&, std::span<const double>, const FractionGrid&, double,
                                         ScaleFactor, double, std::vector<double>*);
template LossBreakdown grad_loss<float>(const BinaryGrid&, const ForwardTrace<float>&, const FractionGrid&,
                                        const BasicNetParams<float>&, double, double, GradSet<float>&);
template LossBreakdown grad_loss<double>(const BinaryGrid&, const ForwardTrace<double>&, const FractionGrid&,
                                         const BasicNetParams<double>&, double, double, GradSet<double>&);

void validate(const TrainConfig& c) {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(c.eta) || c.eta < 0.0 || c.eta > 2000.0) fail(ErrorKind::InvalidConfig, "eta must lie in [0, 2000]");
    if (!finite(c.lr0) || c.lr0 < 1e-5 || c.lr0 > 1e-4) fail(ErrorKind::InvalidConfig, "lr0 must lie in [1e-5, 1e-4]");
    if (!finite(c.decay) || c.decay <= 0.0 || c.decay > 1.0) fail(ErrorKind::InvalidConfig, "decay must lie in (0, 1]");
    if (c.epochs < 1) fail(ErrorKind::InvalidConfig, "epochs must be >= 1");
    if (c.batch < 1) fail(ErrorKind::InvalidConfig, "batch must be >= 1");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0)) {
        fail(ErrorKind::InvalidConfig, "adam betas must lie in [0, 1)");
    }
    if (!finite(c.adam_eps) || c.adam_eps <= 0.0) fail(ErrorKind::InvalidConfig, "adam epsilon must be positive");
    if (!finite(c.clip) || c.clip <= 0.0 || c.clip >= 0.5) fail(ErrorKind::InvalidConfig, "clip must lie in (0, 0.5)");
}

template <typename T>
void adam_step(BasicNetParams<T>& params, const GradSet<T>& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (grads.size() != params.tensors.size()) fail(ErrorKind::ShapeMismatch, "gradient set does not match params");
    if (state.m.empty()) {
        for (const auto& t : params.tensors) {
            state.m.emplace_back(t.values.size(), 0.0);
            state.v.emplace_back(t.values.size(), 0.0);
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        auto& values = params.tensors[t].values;
        auto& m = state.m[t];
        auto& v = state.v[t];
        const auto& g = grads[t];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            values[i] = static_cast<T>(static_cast<double>(values[i]) - lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

template void adam_step<float>(BasicNetParams<float>&, const GradSet<float>&, AdamState&, double, double, double,
                               double);
template void adam_step<double>(BasicNetParams<double>&, const GradSet<double>&, AdamState&, double, double, double,
                                double);

std::vector<TrainingTile> load_tiles(const DatasetManifest& manifest, Split split) {
    std::vector<TrainingTile> tiles;
    for (const auto& rec : manifest.tiles) {
        if (rec.split != split) continue;
        tiles.push_back({read_binary_grid(manifest.fim_path(rec)), read_fraction_grid(manifest.wfm_path(rec))});
    }
    return tiles;
}

LossBreakdown evaluate_loss(const NetParams& params, std::span<const TrainingTile> tiles, double eta, double clip) {
    const detail::FlushDenormals ftz;
    LossBreakdown acc;
    acc.eta = eta;
    const ScaleFactor scale(upsample_product(params.config));
    ForwardTrace<float> trace;
    for (const auto& t : tiles) {
        forward(t.wfm, params, trace);
        accumulate(acc, loss_pace<float>(t.fim, std::span<const float>(trace.prob.data), t.wfm, eta, scale, clip,
                                         nullptr));
    }
    return mean_of(acc, tiles.size());
}

void write_epoch_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot create " + path.string());
    out << "epoch,lr,train_ace,train_penalty,train_total,val_ace,val_penalty,val_total\n";
    char line[512];
    for (const auto& e : log) {
        std::snprintf(line, sizeof line, "%d,%.9g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.lr, e.train.ace,
                      e.train.penalty, e.train.total, e.val.ace, e.val.penalty, e.val.total);
        out << line;
    }
}

TrainResult train(std::span<const TrainingTile> train_tiles, std::span<const TrainingTile> val_tiles,
                  const NetConfig& net, const TrainConfig& config, const std::filesystem::path& ckpt_out,
                  const std::filesystem::path& log_out) {
    const detail::FlushDenormals ftz;
    validate(config);
    if (train_tiles.empty()) fail(ErrorKind::EmptyDataset, "no training tiles");
    if (val_tiles.empty()) fail(ErrorKind::EmptyDataset, "no validation tiles");
    const ScaleFactor scale(upsample_product(net));
    validate(net, scale);

    NetParams params = init_params(net, mix64(config.seed ^ kInitStream));
    params.train_seed = config.seed;
    AdamState adam;
    Rng shuffler(mix64(config.seed ^ kShuffleStream));
    std::vector<std::size_t> order(train_tiles.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    ForwardTrace<float> trace;
    GradSet<float> grads = zero_grads(params);
    std::vector<float> dprob;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr0 * std::pow(config.decay, epoch);
        shuffler.shuffle(order.begin(), order.end());
        LossBreakdown train_acc;
        train_acc.eta = config.eta;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
            for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
            for (std::size_t k = start; k < stop; ++k) {
                const TrainingTile& tile = train_tiles[order[k]];
                forward(tile.wfm, params, trace);
                const LossBreakdown loss = grad_loss(tile.fim, trace, tile.wfm, params, config.eta, config.clip, grads);
                if (!std::isfinite(loss.total)) {
                    fail(ErrorKind::DivergedLoss, "non-finite training loss at epoch " + std::to_string(epoch));
                }
                accumulate(train_acc, loss);
            }
            const float inv = 1.0f / static_cast<float>(stop - start);
            for (auto& g : grads) {
                for (float& x : g) x *= inv;
            }
            adam_step(params, grads, adam, lr, config.beta1, config.beta2, config.adam_eps);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train = mean_of(train_acc, order.size());
        entry.val = evaluate_loss(params, val_tiles, config.eta, config.clip);
        if (!std::isfinite(entry.val.total)) {
            fail(ErrorKind::DivergedLoss, "non-finite validation loss at epoch " + std::to_string(epoch));
        }
        result.log.push_back(entry);

        if (result.best_epoch < 0 || entry.val.total < result.best_val_total) {
            result.best_epoch = epoch;
            result.best_val_total = entry.val.total;
            result.best = params;
            if (!ckpt_out.empty()) save_checkpoint(params, ckpt_out);
        }
        if (!log_out.empty()) write_epoch_log(result.log, log_out);
    }
    return result;
}

TrainResult train(const DatasetManifest& manifest, const NetConfig& net, const TrainConfig& config,
                  const std::filesystem::path& ckpt_out, const std::filesystem::path& log_out) {
    const auto train_tiles = load_tiles(manifest, Split::train);
    const auto val_tiles = load_tiles(manifest, Split::val);
    return train(train_tiles, val_tiles, net, config, ckpt_out, log_out);
}

std::vector<int> IntLattice::values() const {
    std::vector<int> out;
    for (int v = lo; v <= hi; v += step) out.push_back(v);
    return out;
}

void validate(const SearchSpace& s) {
    if (s.budget < 1) fail(ErrorKind::EmptyBudget, "search budget must be >= 1");
    if (!(s.eta_lo >= 0.0 && s.eta_lo <= s.eta_hi && s.eta_hi <= 2000.0)) {
        fail(ErrorKind::InvalidConfig, "eta range must lie within [0, 2000]");
    }
    if (!(s.lr_lo >= 1e-5 && s.lr_lo <= s.lr_hi && s.lr_hi <= 1e-4)) {
        fail(ErrorKind::InvalidConfig, "learning-rate range must lie within [1e-5, 1e-4]");
    }
    auto check = [](const IntLattice& l, int lo, int hi, int step, const char* what) {
        if (l.step < 1 || l.lo > l.hi || l.lo < lo || l.hi > hi || l.step % step != 0 || l.lo % step != 0) {
            fail(ErrorKind::InvalidConfig, std::string(what) + " lattice is outside its allowed range");
        }
    };
    check(s.blocks, 2, 16, 2, "blocks");
    check(s.layers, 2, 32, 2, "layers");
    check(s.features, 8, 64, 8, "features");
    check(s.growth, 8, 64, 8, "growth");
}

SearchResult random_search(const SearchSpace& space, const DatasetManifest& manifest, int epochs_per_trial,
                           const TrainConfig& base_train, const NetConfig& base_net,
                           const std::filesystem::path& out_dir) {
    validate(space);
    if (epochs_per_trial < 1) fail(ErrorKind::InvalidConfig, "epochs per trial must be >= 1");
    const auto blocks = space.blocks.values();
    const auto layers = space.layers.values();
    auto features = space.features.values();
    const auto growth = space.growth.values();
    if (base_net.attention) {
        std::erase_if(features, [&](int v) { return v % base_net.reduction != 0; });
        if (features.empty()) fail(ErrorKind::ChannelIndivisible, "no feature count is divisible by the reduction");
    }

    const auto train_tiles = load_tiles(manifest, Split::train);
    const auto val_tiles = load_tiles(manifest, Split::val);
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    Rng rng(space.seed);
    SearchResult result;
    for (int k = 0; k < space.budget; ++k) {
        Trial trial;
        trial.index = k;
        trial.net = base_net;
        trial.train = base_train;
        trial.train.epochs = epochs_per_trial;
        trial.train.eta = rng.uniform(space.eta_lo, space.eta_hi);
        trial.train.lr0 = rng.uniform(space.lr_lo, space.lr_hi);
        trial.net.blocks = blocks[rng.below(blocks.size())];
        trial.net.layers = layers[rng.below(layers.size())];
        trial.net.features = features[rng.below(features.size())];
        trial.net.growth = growth[rng.below(growth.size())];

        std::filesystem::path ckpt;
        if (!out_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof name, "trial_%03d.ckpt", k);
            ckpt = out_dir / name;
        }
        const TrainResult tr = train(train_tiles, val_tiles, trial.net, trial.train, ckpt);
        trial.val_total = tr.best_val_total;
        result.trials.push_back(trial);
        if (result.trials[result.best].val_total > trial.val_total) result.best = result.trials.size() - 1;
    }
    return result;
}

void write_trial_table(const SearchResult& result, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot create " + path.string());
    out << "trial,eta,lr0,blocks,layers,features,growth,epochs,val_total\n";
    char line[512];
    for (const auto& t : result.trials) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%d,%d,%d,%d,%d,%.17g\n", t.index, t.train.eta, t.train.lr0,
                      t.net.blocks, t.net.layers, t.net.features, t.net.growth, t.train.epochs, t.val_total);
        out << line;
    }
}

}  // namespace floodsr
