#include "floodsr/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string_view>

#include <CLI11.hpp>
#include <json.hpp>

#include "floodsr/baselines.hpp"
#include "floodsr/checkpoint.hpp"
#include "floodsr/error.hpp"
#include "floodsr/evalstats.hpp"
#include "floodsr/raster_io.hpp"
#include "floodsr/srnet.hpp"
#include "floodsr/synthgen.hpp"
#include "floodsr/train.hpp"
#include "floodsr/wfm_ops.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace floodsr::cli {

namespace {

// Thrown for flag combinations CLI11 cannot express.
struct UsageProblem : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class RunRecord {
public:
    explicit RunRecord(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

    ojson config = ojson::object();
    ojson inputs = ojson::object();
    ojson outputs = ojson::object();
    std::optional<std::uint64_t> seed;

    void write(const fs::path& dir) const {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        ojson j;
        j["command"] = command_;
        j["version"] = kVersion;
        j["seed"] = seed ? ojson(*seed) : ojson(nullptr);
        j["config"] = config;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["duration_s"] = secs;
        fs::create_directories(dir);
        std::ofstream out(dir / "run_manifest.json", std::ios::binary);
        out << j.dump(2) << '\n';
        if (!out) fail(ErrorKind::IoFailure, "cannot write run manifest in " + dir.string());
    }

private:
    std::string command_;
    std::chrono::steady_clock::time_point start_;
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

ojson net_json(const NetConfig& n) {
    return {{"features", n.features}, {"blocks", n.blocks},       {"layers", n.layers},
            {"growth", n.growth},     {"kernel", n.kernel},       {"attention", n.attention},
            {"reduction", n.reduction}, {"upsample", n.upsample}};
}

ojson train_json(const TrainConfig& t) {
    return {{"eta", t.eta},     {"lr0", t.lr0},     {"decay", t.decay}, {"epochs", t.epochs},
            {"batch", t.batch}, {"seed", t.seed},   {"beta1", t.beta1}, {"beta2", t.beta2},
            {"adam_eps", t.adam_eps}, {"clip", t.clip}};
}

ojson band_json(const BandLimits& b) { return {{"lo", b.lo}, {"hi", b.hi}}; }

void add_net_options(CLI::App* cmd, NetConfig& net) {
    cmd->add_option("--features", net.features, "Feature channels G0")->capture_default_str();
    cmd->add_option("--blocks", net.blocks, "Residual dense blocks D")->capture_default_str();
    cmd->add_option("--layers", net.layers, "Convolutions per block C")->capture_default_str();
    cmd->add_option("--growth", net.growth, "Growth rate G")->capture_default_str();
    cmd->add_option("--kernel", net.kernel, "Convolution kernel size")->capture_default_str();
    cmd->add_flag("--attention", net.attention, "Channel attention after each block");
    cmd->add_option("--reduction", net.reduction, "Attention bottleneck reduction")->capture_default_str();
    cmd->add_option("--upsample", net.upsample, "Sub-pixel factors, product must equal the scale")
        ->delimiter(',')
        ->capture_default_str();
}

void add_band_options(CLI::App* cmd, BandLimits& band, bool* no_band) {
    cmd->add_option("--band-lo", band.lo, "Lower fraction bound (exclusive)")->capture_default_str();
    cmd->add_option("--band-hi", band.hi, "Upper fraction bound (exclusive)")->capture_default_str();
    if (no_band) cmd->add_flag("--no-band", *no_band, "Score every pixel instead of the band");
}

Split parse_split(const std::string& s) {
    try {
        return split_from_string(s);
    } catch (const Error&) {
        throw UsageProblem("unknown split '" + s + "' (train, val, test)");
    }
}

std::string stem_of(const TileRecord& t) { return fs::path(t.fim).stem().string(); }

struct SplitTiles {
    DatasetManifest manifest;
    std::vector<TileRecord> records;
};

SplitTiles load_split(const fs::path& manifest_path, Split split) {
    SplitTiles s{load_manifest(manifest_path), {}};
    s.records = s.manifest.select(split);
    if (s.records.empty()) fail(ErrorKind::EmptyDataset, "split " + to_string(split) + " holds no tiles");
    return s;
}

BinaryGrid full_mask(const BinaryGrid& like) {
    BinaryGrid m(like.rows(), like.cols());
    for (auto& v : m.cells()) v = 1;
    return m;
}

// Score map for ROC: a probability map when present, else a binary prediction.
FractionGrid read_scores(const fs::path& dir, const std::string& stem) {
    const fs::path wfg = dir / (stem + ".wfg");
    if (fs::exists(wfg)) return read_fraction_grid(wfg);
    const BinaryGrid b = read_binary_grid(dir / (stem + ".pgm"));
    FractionGrid s(b.rows(), b.cols());
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = b[k] ? 1.0f : 0.0f;
    return s;
}

// ---- synth ----

std::vector<double> default_stages() {
    std::vector<double> v;
    for (int k = 1; k <= 20; ++k) v.push_back((4.0 * k) / 100.0);  // same doubles as parsing "0.04", "0.08", ...
    return v;
}

struct SynthArgs {
    // About 840 band-rich tiles (561 train) with the stock options.
    TerrainConfig terrain{.seed = 7, .size = 4097, .roughness = 0.5, .channel_count = 6, .channel_depth = 0.2,
                          .channel_width = 12.0};
    std::vector<double> stages = default_stages();
    DatasetOptions options;
    bool no_dem = false;
    fs::path out;
};

int cmd_synth(const SynthArgs& a) {
    RunRecord run("synth");
    DatasetOptions options = a.options;
    options.write_dem = !a.no_dem;
    const FloodScenario scenario{a.stages};
    run.seed = a.terrain.seed;
    run.config = {{"size", a.terrain.size},
                  {"roughness", a.terrain.roughness},
                  {"channels", a.terrain.channel_count},
                  {"depth", a.terrain.channel_depth},
                  {"width", a.terrain.channel_width},
                  {"stages", a.stages},
                  {"min_band_pixels", options.min_band_pixels},
                  {"band", band_json(options.band)},
                  {"split", {{"train", options.split.train}, {"val", options.split.val}, {"test", options.split.test}}},
                  {"write_dem", options.write_dem}};
    const auto manifest = build_dataset(a.terrain, scenario, a.out, options);
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& t : manifest.tiles) ++counts[static_cast<int>(t.split)];
    run.outputs = {{"manifest", (a.out / "manifest.json").string()},
                   {"tiles", manifest.tiles.size()},
                   {"train", counts[0]},
                   {"val", counts[1]},
                   {"test", counts[2]},
                   {"config_hash", manifest.config_hash}};
    run.write(a.out);
    std::cout << "tiles=" << manifest.tiles.size() << " train=" << counts[0] << " val=" << counts[1]
              << " test=" << counts[2] << '\n';
    return ok;
}

// ---- train ----

struct TrainArgs {
    fs::path data;
    fs::path out;
    NetConfig net;
    TrainConfig train;
};

int cmd_train(const TrainArgs& a) {
    RunRecord run("train");
    run.seed = a.train.seed;
    run.config = {{"net", net_json(a.net)}, {"train", train_json(a.train)}};
    run.inputs = {{"data", a.data.string()}};
    validate(a.net, ScaleFactor{});
    validate(a.train);
    const auto manifest = load_manifest(a.data);
    fs::create_directories(a.out);
    const auto result = train(manifest, a.net, a.train, a.out / "model.ckpt", a.out / "train_log.csv");
    run.outputs = {{"checkpoint", (a.out / "model.ckpt").string()},
                   {"log", (a.out / "train_log.csv").string()},
                   {"best_epoch", result.best_epoch},
                   {"best_val_total", result.best_val_total}};
    run.write(a.out);
    std::cout << "best_epoch=" << result.best_epoch << " val_total=" << fmt(result.best_val_total) << '\n';
    return ok;
}

// ---- search ----

struct SearchArgs {
    fs::path data;
    fs::path out;
    SearchSpace space;
    int epochs = 10;
    NetConfig net;
    TrainConfig train;
};

int cmd_search(const SearchArgs& a) {
    RunRecord run("search");
    run.seed = a.space.seed;
    const auto lat = [](const IntLattice& l) { return ojson::array({l.lo, l.hi, l.step}); };
    run.config = {{"budget", a.space.budget},
                  {"epochs_per_trial", a.epochs},
                  {"eta", {a.space.eta_lo, a.space.eta_hi}},
                  {"lr", {a.space.lr_lo, a.space.lr_hi}},
                  {"blocks", lat(a.space.blocks)},
                  {"layers", lat(a.space.layers)},
                  {"features", lat(a.space.features)},
                  {"growth", lat(a.space.growth)},
                  {"base_net", net_json(a.net)},
                  {"base_train", train_json(a.train)}};
    run.inputs = {{"data", a.data.string()}};
    validate(a.space);
    const auto manifest = load_manifest(a.data);
    fs::create_directories(a.out);
    const auto result = random_search(a.space, manifest, a.epochs, a.train, a.net, a.out);
    write_trial_table(result, a.out / "trials.csv");
    const auto& best = result.trials.at(result.best);
    char name[32];
    std::snprintf(name, sizeof name, "trial_%03d.ckpt", best.index);
    fs::copy_file(a.out / name, a.out / "best.ckpt", fs::copy_options::overwrite_existing);
    run.outputs = {{"trials", (a.out / "trials.csv").string()},
                   {"best", (a.out / "best.ckpt").string()},
                   {"best_trial", best.index},
                   {"best_val_total", best.val_total},
                   {"best_net", net_json(best.net)},
                   {"best_train", train_json(best.train)}};
    run.write(a.out);
    std::cout << "best_trial=" << best.index << " val_total=" << fmt(best.val_total) << '\n';
    return ok;
}

// ---- downscale / baseline ----

struct InputArgs {
    fs::path wfm;
    fs::path data;
    std::string split = "test";
};

// (stem, WFM) pairs named either by the single input file or by manifest tiles.
std::vector<std::pair<std::string, FractionGrid>> gather_inputs(const InputArgs& in, RunRecord& run) {
    std::vector<std::pair<std::string, FractionGrid>> items;
    if (!in.wfm.empty()) {
        if (!in.data.empty()) throw UsageProblem("give either --wfm or --data, not both");
        run.inputs["wfm"] = in.wfm.string();
        items.emplace_back(in.wfm.stem().string(), read_fraction_grid(in.wfm));
        return items;
    }
    if (in.data.empty()) throw UsageProblem("one of --wfm or --data is required");
    run.inputs["data"] = in.data.string();
    run.inputs["split"] = in.split;
    const auto s = load_split(in.data, parse_split(in.split));
    for (const auto& t : s.records) items.emplace_back(stem_of(t), read_fraction_grid(s.manifest.wfm_path(t)));
    return items;
}

void add_input_options(CLI::App* cmd, InputArgs& in) {
    cmd->add_option("--wfm", in.wfm, "Single WFG1 water fraction map");
    cmd->add_option("--data", in.data, "Dataset manifest.json");
    cmd->add_option("--split", in.split, "Manifest split to process")->capture_default_str();
}

struct DownscaleArgs {
    fs::path model;
    InputArgs in;
    double theta = 0.5;
    bool probs = false;
    fs::path out;
};

int cmd_downscale(const DownscaleArgs& a) {
    RunRecord run("downscale");
    run.config = {{"theta", a.theta}, {"write_probabilities", a.probs}};
    run.inputs["model"] = a.model.string();
    const NetParams params = load_checkpoint(a.model);
    run.config["net"] = net_json(params.config);
    run.seed = params.train_seed;
    const auto items = gather_inputs(a.in, run);
    fs::create_directories(a.out);
    for (const auto& [stem, wfm] : items) {
        const FractionGrid prob = forward(wfm, params);
        write_binary_grid(threshold_grid(prob, a.theta), a.out / (stem + ".pgm"));
        if (a.probs) write_fraction_grid(prob, a.out / (stem + ".wfg"));
    }
    run.outputs = {{"dir", a.out.string()}, {"tiles", items.size()}};
    run.write(a.out);
    std::cout << "tiles=" << items.size() << '\n';
    return ok;
}

struct BaselineArgs {
    std::string method = "bicubic";
    double a = -0.5;
    int lobes = 3;
    double theta = 0.5;
    bool probs = false;
    InputArgs in;
    fs::path out;
};

int cmd_baseline(const BaselineArgs& a) {
    RunRecord run("baseline");
    run.config = {{"method", a.method}, {"theta", a.theta}, {"write_scores", a.probs}};
    std::optional<KernelSpec> kernel;
    if (a.method == "bicubic") {
        kernel = KernelSpec::bicubic(a.a);
        run.config["a"] = a.a;
    } else if (a.method == "lanczos") {
        kernel = KernelSpec::lanczos(a.lobes);
        run.config["lobes"] = a.lobes;
    } else if (a.method != "naive") {
        throw UsageProblem("unknown method '" + a.method + "' (bicubic, lanczos, naive)");
    }
    if (kernel) validate(*kernel);
    const auto items = gather_inputs(a.in, run);
    const ScaleFactor scale{};
    fs::create_directories(a.out);
    for (const auto& [stem, wfm] : items) {
        if (kernel) {
            const FractionGrid up = interp_upscale(wfm, scale, *kernel);
            write_binary_grid(threshold_grid(up, a.theta), a.out / (stem + ".pgm"));
            if (a.probs) write_fraction_grid(up, a.out / (stem + ".wfg"));
        } else {
            write_binary_grid(naive_downscale(wfm, scale), a.out / (stem + ".pgm"));
        }
    }
    run.outputs = {{"dir", a.out.string()}, {"tiles", items.size()}};
    run.write(a.out);
    std::cout << "tiles=" << items.size() << '\n';
    return ok;
}

// ---- evaluate / roc / compare ----

struct ScoredTile {
    std::string stem;
    BinaryGrid truth;
    BinaryGrid mask;
};

std::vector<ScoredTile> truth_tiles(const fs::path& data, const std::string& split, const BandLimits& band,
                                    bool no_band) {
    validate(band);
    const auto s = load_split(data, parse_split(split));
    std::vector<ScoredTile> out;
    for (const auto& t : s.records) {
        ScoredTile st{stem_of(t), read_binary_grid(s.manifest.fim_path(t)), {}};
        st.mask = no_band ? full_mask(st.truth) : band_mask(read_fraction_grid(s.manifest.wfm_path(t)), band);
        out.push_back(std::move(st));
    }
    return out;
}

struct EvaluateArgs {
    fs::path data;
    std::string split = "test";
    fs::path pred;
    fs::path scores;
    BandLimits band;
    bool no_band = false;
    double conf = 0.99;
    std::string model = "model";
    fs::path out;
};

int cmd_evaluate(const EvaluateArgs& a) {
    RunRecord run("evaluate");
    run.config = {{"split", a.split}, {"band", a.no_band ? ojson(nullptr) : band_json(a.band)},
                  {"conf", a.conf},   {"model", a.model}};
    run.inputs = {{"data", a.data.string()}, {"pred", a.pred.string()}};
    if (!a.scores.empty()) run.inputs["scores"] = a.scores.string();
    const auto tiles = truth_tiles(a.data, a.split, a.band, a.no_band);
    ConfusionCounts counts;
    ScorePool pool;
    for (const auto& t : tiles) {
        counts += confusion_partial(read_binary_grid(a.pred / (t.stem + ".pgm")), t.truth, t.mask);
        if (!a.scores.empty()) pool.add(read_scores(a.scores, t.stem), t.truth, t.mask);
    }
    if (counts.n() == 0) fail(ErrorKind::EmptyMask, "no pixel falls inside the evaluation mask");
    std::optional<double> auc_value;
    if (!a.scores.empty()) {
        try {
            auc_value = auc(roc(pool));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::SingleClassMask) throw;
        }
    }
    const auto report = make_report(a.model, counts, auc_value, a.conf);
    fs::create_directories(a.out);
    write_text(a.out / "report.json", report_json(report) + "\n");
    run.outputs = {{"report", (a.out / "report.json").string()}};
    run.write(a.out);
    std::cout << "accuracy=" << fmt(report.accuracy) << " mcc=" << fmt(report.mcc) << '\n';
    return ok;
}

struct RocArgs {
    fs::path data;
    std::string split = "test";
    fs::path scores;
    BandLimits band;
    bool no_band = false;
    fs::path out;
};

int cmd_roc(const RocArgs& a) {
    RunRecord run("roc");
    run.config = {{"split", a.split}, {"band", a.no_band ? ojson(nullptr) : band_json(a.band)}};
    run.inputs = {{"data", a.data.string()}, {"scores", a.scores.string()}};
    const auto tiles = truth_tiles(a.data, a.split, a.band, a.no_band);
    ScorePool pool;
    for (const auto& t : tiles) pool.add(read_scores(a.scores, t.stem), t.truth, t.mask);
    const auto curve = roc(pool);
    const double area = auc(curve);
    std::ostringstream csv;
    csv << "theta,fpr,tpr\n";
    for (const auto& p : curve.points) csv << fmt(p.theta) << ',' << fmt(p.fpr) << ',' << fmt(p.tpr) << '\n';
    fs::create_directories(a.out);
    write_text(a.out / "roc.csv", csv.str());
    write_text(a.out / "auc.json", ojson{{"auc", area}, {"points", curve.points.size()}}.dump(1) + "\n");
    run.outputs = {{"curve", (a.out / "roc.csv").string()}, {"auc", area}};
    run.write(a.out);
    std::cout << "auc=" << fmt(area) << '\n';
    return ok;
}

struct CompareArgs {
    fs::path data;
    std::string split = "test";
    std::vector<std::string> preds;  // NAME=DIR
    BandLimits band;
    bool no_band = false;
    double fwer = 1e-3;
    fs::path out;
};

int cmd_compare(const CompareArgs& a) {
    RunRecord run("compare");
    run.config = {{"split", a.split}, {"band", a.no_band ? ojson(nullptr) : band_json(a.band)}, {"fwer", a.fwer}};
    std::vector<std::pair<std::string, fs::path>> sets;
    for (const auto& p : a.preds) {
        const auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == p.size()) {
            throw UsageProblem("--pred expects NAME=DIR, got '" + p + "'");
        }
        sets.emplace_back(p.substr(0, eq), p.substr(eq + 1));
        run.inputs[sets.back().first] = sets.back().second.string();
    }
    if (sets.size() < 2) throw UsageProblem("compare needs at least two --pred sets");
    run.inputs["data"] = a.data.string();
    const auto tiles = truth_tiles(a.data, a.split, a.band, a.no_band);

    const std::size_t m = sets.size();
    std::vector<McNemarCounts> disc(m * m);
    for (const auto& t : tiles) {
        std::vector<BinaryGrid> preds;
        for (const auto& s : sets) preds.push_back(read_binary_grid(s.second / (t.stem + ".pgm")));
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) disc[i * m + j] += discordant_pairs(preds[i], preds[j], t.truth, t.mask);
        }
    }
    std::vector<LabeledPValue> pvals;
    std::vector<ojson> rows;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const auto& d = disc[i * m + j];
            const std::string label = sets[i].first + "|" + sets[j].first;
            pvals.push_back({label, mcnemar_exact(d.b, d.c)});
            rows.push_back({{"a", sets[i].first}, {"b", sets[j].first}, {"a_only_correct", d.b},
                            {"b_only_correct", d.c}, {"p", pvals.back().p}, {"rejected", false}});
        }
    }
    const auto rejected = holm_bonferroni(pvals, a.fwer);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        rows[k]["rejected"] = std::find(rejected.begin(), rejected.end(), pvals[k].label) != rejected.end();
    }
    ojson report{{"fwer", a.fwer}, {"pairs", rows}};
    fs::create_directories(a.out);
    write_text(a.out / "compare.json", report.dump(1) + "\n");
    run.outputs = {{"report", (a.out / "compare.json").string()}, {"rejected", rejected.size()}};
    run.write(a.out);
    std::cout << "pairs=" << rows.size() << " rejected=" << rejected.size() << '\n';
    return ok;
}

// ---- render ----

struct RenderArgs {
    fs::path truth;
    fs::path pred;
    fs::path input;
    std::string name = "render.pgm";
    fs::path out;
};

Grid<std::uint8_t> render_grid(const fs::path& path) {
    if (path.extension() == ".pgm") {
        BinaryGrid b = read_binary_grid(path);
        for (auto& v : b.cells()) v = v ? 255 : 0;
        return b;
    }
    const FractionGrid g = read_fraction_grid(path);
    float lo = 0.0f;
    float hi = 1.0f;
    for (float v : g.cells()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    // Fractions and probabilities map linearly from [0, 1]; anything else
    // (elevations) is stretched over its own range.
    Grid<std::uint8_t> img(g.rows(), g.cols());
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double t = hi > lo ? (g[k] - lo) / (hi - lo) : 0.0;
        img[k] = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
    }
    return img;
}

int cmd_render(const RenderArgs& a) {
    RunRecord run("render");
    run.config = {{"name", a.name}};
    Grid<std::uint8_t> img;
    if (!a.input.empty()) {
        if (!a.truth.empty() || !a.pred.empty()) throw UsageProblem("give --input or --truth/--pred, not both");
        run.config["mode"] = "grayscale";
        run.inputs = {{"input", a.input.string()}};
        img = render_grid(a.input);
    } else {
        if (a.truth.empty() || a.pred.empty()) throw UsageProblem("difference map needs --truth and --pred");
        run.config["mode"] = "difference";
        run.config["levels"] = {{"tn", 0}, {"fp", 85}, {"fn", 170}, {"tp", 255}};
        run.inputs = {{"truth", a.truth.string()}, {"pred", a.pred.string()}};
        const BinaryGrid t = read_binary_grid(a.truth);
        const BinaryGrid p = read_binary_grid(a.pred);
        require_same_shape(t, p, "render(truth, pred)");
        img = Grid<std::uint8_t>(t.rows(), t.cols());
        for (std::size_t k = 0; k < t.size(); ++k) {
            img[k] = t[k] ? (p[k] ? 255 : 170) : (p[k] ? 85 : 0);
        }
    }
    fs::create_directories(a.out);
    write_gray_image(img, a.out / a.name);
    run.outputs = {{"image", (a.out / a.name).string()}};
    run.write(a.out);
    return ok;
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidConfig:
        case ErrorKind::BadSize:
        case ErrorKind::EmptyBudget:
        case ErrorKind::ChannelIndivisible:
            return usage_error;
        case ErrorKind::NonFiniteActivation:
        case ErrorKind::DivergedLoss:
            return internal_error;
        default:
            return data_error;
    }
}

void report_error(int code, std::string_view kind, std::string message) {
    for (auto& ch : message) {
        if (ch == '\n' || ch == '\r') ch = ' ';
        if (ch == '"') ch = '\'';
    }
    std::cerr << "error code=" << code << " kind=" << kind << " message=\"" << message << "\"\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Flood inundation map downscaling toolkit", "floodsr"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic FIM/WFM dataset");
    c_synth->add_option("--seed", synth.terrain.seed, "Terrain and split seed")->capture_default_str();
    c_synth->add_option("--size", synth.terrain.size, "DEM side, 2^n + 1")->capture_default_str();
    c_synth->add_option("--roughness", synth.terrain.roughness, "Fractal amplitude decay")->capture_default_str();
    c_synth->add_option("--channels", synth.terrain.channel_count, "Carved channels")->capture_default_str();
    c_synth->add_option("--depth", synth.terrain.channel_depth, "Channel depth")->capture_default_str();
    c_synth->add_option("--width", synth.terrain.channel_width, "Channel width in cells")->capture_default_str();
    c_synth->add_option("--stages", synth.stages, "Water stages above the channel bed")
        ->delimiter(',')
        ->capture_default_str();
    c_synth->add_option("--min-band-pixels", synth.options.min_band_pixels, "Tile filter: in-band WFM cells")
        ->capture_default_str();
    add_band_options(c_synth, synth.options.band, nullptr);
    c_synth->add_option("--train-frac", synth.options.split.train)->capture_default_str();
    c_synth->add_option("--val-frac", synth.options.split.val)->capture_default_str();
    c_synth->add_option("--test-frac", synth.options.split.test)->capture_default_str();
    c_synth->add_flag("--no-dem", synth.no_dem, "Skip writing dem.wfg");
    c_synth->add_option("--out", synth.out, "Output directory")->required();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train the downscaling network");
    c_train->add_option("--data", tr.data, "Dataset manifest.json")->required();
    c_train->add_option("--out", tr.out, "Output directory")->required();
    add_net_options(c_train, tr.net);
    c_train->add_option("--eta", tr.train.eta, "Fraction penalty weight")->capture_default_str();
    c_train->add_option("--lr", tr.train.lr0, "Initial learning rate")->capture_default_str();
    c_train->add_option("--decay", tr.train.decay, "Per-epoch learning-rate decay")->capture_default_str();
    c_train->add_option("--epochs", tr.train.epochs)->capture_default_str();
    c_train->add_option("--batch", tr.train.batch)->capture_default_str();
    c_train->add_option("--seed", tr.train.seed, "Initialization and shuffling seed")->capture_default_str();

    SearchArgs se;
    auto* c_search = app.add_subcommand("search", "Seeded random hyperparameter search");
    c_search->add_option("--data", se.data, "Dataset manifest.json")->required();
    c_search->add_option("--out", se.out, "Output directory")->required();
    c_search->add_option("--budget", se.space.budget, "Number of trials")->capture_default_str();
    c_search->add_option("--seed", se.space.seed, "Sampling seed")->capture_default_str();
    c_search->add_option("--epochs", se.epochs, "Epochs per trial")->capture_default_str();
    c_search->add_option("--eta-lo", se.space.eta_lo)->capture_default_str();
    c_search->add_option("--eta-hi", se.space.eta_hi)->capture_default_str();
    c_search->add_option("--lr-lo", se.space.lr_lo)->capture_default_str();
    c_search->add_option("--lr-hi", se.space.lr_hi)->capture_default_str();
    c_search->add_option("--blocks-max", se.space.blocks.hi)->capture_default_str();
    c_search->add_option("--layers-max", se.space.layers.hi)->capture_default_str();
    c_search->add_option("--features-max", se.space.features.hi)->capture_default_str();
    c_search->add_option("--growth-max", se.space.growth.hi)->capture_default_str();
    c_search->add_option("--batch", se.train.batch)->capture_default_str();
    c_search->add_option("--train-seed", se.train.seed, "Seed for each trial's training")->capture_default_str();
    c_search->add_flag("--attention", se.net.attention, "Search networks with channel attention");
    c_search->add_option("--reduction", se.net.reduction)->capture_default_str();

    DownscaleArgs ds;
    auto* c_down = app.add_subcommand("downscale", "Predict FIMs from WFMs with a trained model");
    c_down->add_option("--model", ds.model, "Checkpoint")->required();
    add_input_options(c_down, ds.in);
    c_down->add_option("--theta", ds.theta, "Probability threshold")->capture_default_str();
    c_down->add_flag("--probs", ds.probs, "Also write probability maps (.wfg)");
    c_down->add_option("--out", ds.out, "Output directory")->required();

    BaselineArgs bl;
    auto* c_base = app.add_subcommand("baseline", "Interpolation or all-dry baseline predictions");
    c_base->add_option("--method", bl.method, "bicubic, lanczos or naive")->capture_default_str();
    c_base->add_option("--a", bl.a, "Bicubic sharpness")->capture_default_str();
    c_base->add_option("--lobes", bl.lobes, "Lanczos lobes")->capture_default_str();
    c_base->add_option("--theta", bl.theta, "Threshold on the interpolated fraction")->capture_default_str();
    c_base->add_flag("--probs", bl.probs, "Also write the interpolated maps (.wfg)");
    add_input_options(c_base, bl.in);
    c_base->add_option("--out", bl.out, "Output directory")->required();

    EvaluateArgs ev;
    auto* c_eval = app.add_subcommand("evaluate", "Accuracy, interval, MCC and AUC over a split");
    c_eval->add_option("--data", ev.data, "Dataset manifest.json")->required();
    c_eval->add_option("--split", ev.split)->capture_default_str();
    c_eval->add_option("--pred", ev.pred, "Directory of <tile>.pgm predictions")->required();
    c_eval->add_option("--scores", ev.scores, "Directory of <tile>.wfg scores for AUC");
    add_band_options(c_eval, ev.band, &ev.no_band);
    c_eval->add_option("--conf", ev.conf, "Interval confidence")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    c_eval->add_option("--model", ev.model, "Name in the report")->capture_default_str();
    c_eval->add_option("--out", ev.out, "Output directory")->required();

    RocArgs rc;
    auto* c_roc = app.add_subcommand("roc", "Export a ROC curve and its AUC");
    c_roc->add_option("--data", rc.data, "Dataset manifest.json")->required();
    c_roc->add_option("--split", rc.split)->capture_default_str();
    c_roc->add_option("--scores", rc.scores, "Directory of <tile>.wfg scores (or .pgm)")->required();
    add_band_options(c_roc, rc.band, &rc.no_band);
    c_roc->add_option("--out", rc.out, "Output directory")->required();

    CompareArgs cp;
    auto* c_cmp = app.add_subcommand("compare", "Pairwise McNemar tests with Holm correction");
    c_cmp->add_option("--data", cp.data, "Dataset manifest.json")->required();
    c_cmp->add_option("--split", cp.split)->capture_default_str();
    c_cmp->add_option("--pred", cp.preds, "NAME=DIR prediction set (repeat)")->required();
    add_band_options(c_cmp, cp.band, &cp.no_band);
    c_cmp->add_option("--fwer", cp.fwer, "Family-wise error rate")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    c_cmp->add_option("--out", cp.out, "Output directory")->required();

    RenderArgs rd;
    auto* c_render = app.add_subcommand("render", "Grayscale render or truth/prediction difference map");
    c_render->add_option("--input", rd.input, "FIM (.pgm) or WFG1 grid to render");
    c_render->add_option("--truth", rd.truth, "Reference FIM");
    c_render->add_option("--pred", rd.pred, "Predicted FIM");
    c_render->add_option("--name", rd.name, "Output image name")->capture_default_str();
    c_render->add_option("--out", rd.out, "Output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        if (c_synth->parsed()) return cmd_synth(synth);
        if (c_train->parsed()) return cmd_train(tr);
        if (c_search->parsed()) return cmd_search(se);
        if (c_down->parsed()) return cmd_downscale(ds);
        if (c_base->parsed()) return cmd_baseline(bl);
        if (c_eval->parsed()) return cmd_evaluate(ev);
        if (c_roc->parsed()) return cmd_roc(rc);
        if (c_cmp->parsed()) return cmd_compare(cp);
        if (c_render->parsed()) return cmd_render(rd);
        return usage_error;
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error(usage_error, "UsageError", e.what());
        return usage_error;
    } catch (const UsageProblem& e) {
        report_error(usage_error, "UsageError", e.what());
        return usage_error;
    } catch (const Error& e) {
        const int code = exit_code_for(e.kind());
        report_error(code, to_string(e.kind()), e.what());
        return code;
    } catch (const fs::filesystem_error& e) {
        report_error(data_error, "IoFailure", e.what());
        return data_error;
    } catch (const std::exception& e) {
        report_error(internal_error, "InternalError", e.what());
        return internal_error;
    }
}

int main_entry(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace floodsr::cli
