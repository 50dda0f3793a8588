#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "floodsr/grid.hpp"

namespace floodsr {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t n() const noexcept { return tp + tn + fp + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Counts over pixels where mask == 1; positive class = inundated.
ConfusionCounts confusion(const BinaryGrid& pred, const BinaryGrid& truth, const BinaryGrid& mask);
/// Same, but an empty mask yields zero counts instead of EmptyMask (for pooling).
ConfusionCounts confusion_partial(const BinaryGrid& pred, const BinaryGrid& truth, const BinaryGrid& mask);

double accuracy(const ConfusionCounts& c);
/// Matthews correlation; 0 whenever any marginal is empty.
double mcc(const ConfusionCounts& c);

struct RocPoint {
    double theta = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // in sweep order (increasing theta)
};

/// Accumulates masked (score, label) pairs from many tiles.
class ScorePool {
public:
    void add(const FractionGrid& scores, const BinaryGrid& truth, const BinaryGrid& mask);
    void add(const BinaryGrid& binary_scores, const BinaryGrid& truth, const BinaryGrid& mask);

    const std::vector<float>& scores() const noexcept { return scores_; }
    const std::vector<std::uint8_t>& labels() const noexcept { return labels_; }

private:
    std::vector<float> scores_;
    std::vector<std::uint8_t> labels_;
};

/// Thresholds: the 101-point lattice {0, 0.01, ..., 1}, the distinct score
/// values when there are at most max_distinct of them, and one point just
/// above 1 so the sweep ends at (0, 0).
std::vector<double> default_thresholds(const std::vector<float>& scores, std::size_t max_distinct = 20000);

RocCurve roc(const ScorePool& pool, const std::vector<double>& thresholds);
RocCurve roc(const ScorePool& pool);
RocCurve roc(const FractionGrid& scores, const BinaryGrid& truth, const BinaryGrid& mask);

/// Trapezoid rule over fpr-sorted points with (0,0) and (1,1) appended.
double auc(const RocCurve& curve);

/// Exact interval via beta quantiles (bisection on the regularized
/// incomplete beta to 1e-10).
std::pair<double, double> clopper_pearson(std::uint64_t k, std::uint64_t n, double conf = 0.99);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// x such that I_x(a, b) = p, by bisection.
double beta_quantile(double p, double a, double b, double tol = 1e-10);

struct McNemarCounts {
    std::uint64_t b = 0;  // A correct, B wrong
    std::uint64_t c = 0;  // A wrong, B correct
    McNemarCounts& operator+=(const McNemarCounts& o) noexcept {
        b += o.b;
        c += o.c;
        return *this;
    }
};

McNemarCounts discordant_pairs(const BinaryGrid& pred_a, const BinaryGrid& pred_b, const BinaryGrid& truth,
                               const BinaryGrid& mask);
/// Exact two-sided binomial p-value min(1, 2 P(X <= min(b, c))), X ~ Bin(b + c, 1/2).
double mcnemar_exact(std::uint64_t b, std::uint64_t c);
double mcnemar(const BinaryGrid& pred_a, const BinaryGrid& pred_b, const BinaryGrid& truth, const BinaryGrid& mask);

struct LabeledPValue {
    std::string label;
    double p = 1.0;
};

/// Step-down Holm procedure; returns the labels of rejected hypotheses.
std::vector<std::string> holm_bonferroni(const std::vector<LabeledPValue>& pvalues, double fwer = 1e-3);

struct EvalReport {
    std::string model;
    std::uint64_t n = 0;
    double accuracy = 0.0;
    std::pair<double, double> acc_pi{0.0, 0.0};
    double mcc = 0.0;
    std::optional<double> auc;  // empty when the mask holds a single class
    ConfusionCounts counts;
};

EvalReport make_report(const std::string& model, const ConfusionCounts& counts, std::optional<double> auc_value,
                       double conf = 0.99);
std::string report_json(const EvalReport& report);

}  // namespace floodsr
