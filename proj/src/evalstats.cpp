#include "floodsr/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace floodsr {

namespace {

void require_nonempty_mask(const BinaryGrid& mask) {
    for (auto m : mask.cells()) {
        if (m) return;
    }
    fail(ErrorKind::EmptyMask, "evaluation mask selects no pixels");
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 200000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

ConfusionCounts confusion_partial(const BinaryGrid& pred, const BinaryGrid& truth, const BinaryGrid& mask) {
    require_same_shape(pred, truth, "confusion(pred, truth)");
    require_same_shape(pred, mask, "confusion(pred, mask)");
    ConfusionCounts c;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (!mask[k]) continue;
        const bool p = pred[k] != 0;
        const bool t = truth[k] != 0;
        if (p && t) ++c.tp;
        else if (!p && !t) ++c.tn;
        else if (p) ++c.fp;
        else ++c.fn;
    }
    return c;
}

ConfusionCounts confusion(const BinaryGrid& pred, const BinaryGrid& truth, const BinaryGrid& mask) {
    require_same_shape(pred, truth, "confusion(pred, truth)");
    require_same_shape(pred, mask, "confusion(pred, mask)");
    require_nonempty_mask(mask);
    return confusion_partial(pred, truth, mask);
}

double accuracy(const ConfusionCounts& c) {
    if (c.n() == 0) fail(ErrorKind::EmptyMask, "accuracy of an empty confusion matrix");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.n());
}

double mcc(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp);
    const double tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn);
    const double a = tp + fp;
    const double b = tp + fn;
    const double d = tn + fp;
    const double e = tn + fn;
    if (a == 0.0 || b == 0.0 || d == 0.0 || e == 0.0) return 0.0;
    const double v = (tp * tn - fp * fn) / (std::sqrt(a) * std::sqrt(b) * std::sqrt(d) * std::sqrt(e));
    return std::clamp(v, -1.0, 1.0);
}

void ScorePool::add(const FractionGrid& scores, const BinaryGrid& truth, const BinaryGrid& mask) {
    require_same_shape(scores, truth, "roc(scores, truth)");
    require_same_shape(scores, mask, "roc(scores, mask)");
    for (std::size_t k = 0; k < scores.size(); ++k) {
        if (!mask[k]) continue;
        scores_.push_back(scores[k]);
        labels_.push_back(truth[k] ? 1 : 0);
    }
}

void ScorePool::add(const BinaryGrid& binary_scores, const BinaryGrid& truth, const BinaryGrid& mask) {
    FractionGrid s(binary_scores.rows(), binary_scores.cols());
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = binary_scores[k] ? 1.0f : 0.0f;
    add(s, truth, mask);
}

std::vector<double> default_thresholds(const std::vector<float>& scores, std::size_t max_distinct) {
    std::vector<double> th;
    for (int i = 0; i <= 100; ++i) th.push_back(i / 100.0);
    std::vector<float> distinct(scores);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() <= max_distinct) {
        for (float v : distinct) {
            if (v >= 0.0f && v <= 1.0f) th.push_back(v);
        }
    }
    const double top = distinct.empty() ? 1.0 : std::max(1.0, static_cast<double>(distinct.back()));
    th.push_back(std::nextafter(top, std::numeric_limits<double>::infinity()));
    std::sort(th.begin(), th.end());
    th.erase(std::unique(th.begin(), th.end()), th.end());
    return th;
}

RocCurve roc(const ScorePool& pool, const std::vector<double>& thresholds) {
    std::vector<double> pos;
    std::vector<double> neg;
    for (std::size_t k = 0; k < pool.scores().size(); ++k) {
        (pool.labels()[k] ? pos : neg).push_back(static_cast<double>(pool.scores()[k]));
    }
    if (pos.empty() || neg.empty()) {
        fail(ErrorKind::SingleClassMask, "ROC needs both classes under the mask");
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    std::vector<double> th(thresholds);
    std::sort(th.begin(), th.end());

    RocCurve curve;
    for (double t : th) {
        const auto tp = static_cast<double>(pos.end() - std::lower_bound(pos.begin(), pos.end(), t));
        const auto fp = static_cast<double>(neg.end() - std::lower_bound(neg.begin(), neg.end(), t));
        curve.points.push_back({t, fp / static_cast<double>(neg.size()), tp / static_cast<double>(pos.size())});
    }
    return curve;
}

RocCurve roc(const ScorePool& pool) { return roc(pool, default_thresholds(pool.scores())); }

RocCurve roc(const FractionGrid& scores, const BinaryGrid& truth, const BinaryGrid& mask) {
    ScorePool pool;
    pool.add(scores, truth, mask);
    return roc(pool);
}

double auc(const RocCurve& curve) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(curve.points.size() + 2);
    pts.emplace_back(0.0, 0.0);
    for (const auto& p : curve.points) pts.emplace_back(p.fpr, p.tpr);
    pts.emplace_back(1.0, 1.0);
    std::sort(pts.begin(), pts.end());
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) * 0.5;
    }
    return std::clamp(area, 0.0, 1.0);
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
        fail(ErrorKind::DomainError, "incomplete beta needs a, b > 0 and x in [0, 1]");
    }
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_quantile(double p, double a, double b, double tol) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::DomainError, "quantile level must lie in [0, 1]");
    double lo = 0.0;
    double hi = 1.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (incomplete_beta(a, b, mid) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

std::pair<double, double> clopper_pearson(std::uint64_t k, std::uint64_t n, double conf) {
    if (n == 0 || k > n || !(conf > 0.0 && conf < 1.0)) {
        fail(ErrorKind::DomainError, "clopper_pearson needs 0 <= k <= n, n >= 1, conf in (0, 1)");
    }
    const double alpha = 1.0 - conf;
    const double kd = static_cast<double>(k);
    const double nd = static_cast<double>(n);
    const double lo = k == 0 ? 0.0 : beta_quantile(alpha / 2.0, kd, nd - kd + 1.0);
    const double hi = k == n ? 1.0 : beta_quantile(1.0 - alpha / 2.0, kd + 1.0, nd - kd);
    return {lo, hi};
}

McNemarCounts discordant_pairs(const BinaryGrid& pred_a, const BinaryGrid& pred_b, const BinaryGrid& truth,
                               const BinaryGrid& mask) {
    require_same_shape(pred_a, pred_b, "mcnemar(a, b)");
    require_same_shape(pred_a, truth, "mcnemar(a, truth)");
    require_same_shape(pred_a, mask, "mcnemar(a, mask)");
    McNemarCounts out;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (!mask[k]) continue;
        const bool a_ok = (pred_a[k] != 0) == (truth[k] != 0);
        const bool b_ok = (pred_b[k] != 0) == (truth[k] != 0);
        if (a_ok && !b_ok) ++out.b;
        if (!a_ok && b_ok) ++out.c;
    }
    return out;
}

double mcnemar_exact(std::uint64_t b, std::uint64_t c) {
    const std::uint64_t n = b + c;
    if (n == 0) return 1.0;
    const std::uint64_t m = std::min(b, c);
    double tail = 0.0;
    if (n <= 1000) {
        // Exact term recurrence; 2^-n is representable for n <= 1000.
        double term = std::ldexp(1.0, -static_cast<int>(n));
        for (std::uint64_t i = 0; i <= m; ++i) {
            tail += term;
            term = term * static_cast<double>(n - i) / static_cast<double>(i + 1);
        }
    } else if (m == n - m) {
        tail = 1.0;
    } else {
        // P(X <= m) = I_{1/2}(n - m, m + 1)
        tail = incomplete_beta(static_cast<double>(n - m), static_cast<double>(m + 1), 0.5);
    }
    return std::min(1.0, 2.0 * tail);
}

double mcnemar(const BinaryGrid& pred_a, const BinaryGrid& pred_b, const BinaryGrid& truth, const BinaryGrid& mask) {
    const auto d = discordant_pairs(pred_a, pred_b, truth, mask);
    return mcnemar_exact(d.b, d.c);
}

std::vector<std::string> holm_bonferroni(const std::vector<LabeledPValue>& pvalues, double fwer) {
    for (const auto& p : pvalues) {
        if (!(p.p >= 0.0 && p.p <= 1.0)) fail(ErrorKind::DomainError, "p-value outside [0, 1] for " + p.label);
    }
    std::vector<std::size_t> order(pvalues.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return pvalues[x].p < pvalues[y].p; });
    std::vector<std::string> rejected;
    const std::size_t m = pvalues.size();
    for (std::size_t i = 0; i < m; ++i) {
        const auto& p = pvalues[order[i]];
        if (!(p.p <= fwer / static_cast<double>(m - i))) break;
        rejected.push_back(p.label);
    }
    return rejected;
}

EvalReport make_report(const std::string& model, const ConfusionCounts& counts, std::optional<double> auc_value,
                       double conf) {
    EvalReport r;
    r.model = model;
    r.counts = counts;
    r.n = counts.n();
    r.accuracy = accuracy(counts);
    r.acc_pi = clopper_pearson(counts.tp + counts.tn, r.n, conf);
    r.mcc = mcc(counts);
    r.auc = auc_value;
    return r;
}

std::string report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["model"] = r.model;
    j["n"] = r.n;
    j["accuracy"] = r.accuracy;
    j["acc_pi"] = {r.acc_pi.first, r.acc_pi.second};
    j["mcc"] = r.mcc;
    j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
    j["counts"] = {{"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp}, {"fn", r.counts.fn}};
    return j.dump(1);
}

}  // namespace floodsr
