#include "floodsr/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "floodsr/wfm_ops.hpp"

namespace floodsr {

namespace {

double sinc(double x) noexcept {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

struct Taps {
    std::vector<int> index;     // clamped source index
    std::vector<double> weight; // renormalized
};

// One tap set per output coordinate along an axis of length n -> n * f.
std::vector<Taps> axis_taps(std::size_t n, int f, int support,
                            const std::function<double(double)>& kernel) {
    std::vector<Taps> taps(n * static_cast<std::size_t>(f));
    const int last = static_cast<int>(n) - 1;
    for (std::size_t o = 0; o < taps.size(); ++o) {
        const double u = (static_cast<double>(o) + 0.5) / f - 0.5;
        const int base = static_cast<int>(std::floor(u));
        Taps& t = taps[o];
        double total = 0.0;
        for (int j = base - support + 1; j <= base + support; ++j) {
            const double w = kernel(u - j);
            if (w == 0.0) continue;
            t.index.push_back(std::clamp(j, 0, last));
            t.weight.push_back(w);
            total += w;
        }
        for (double& w : t.weight) w /= total;
    }
    return taps;
}

FractionGrid separable_upscale(const FractionGrid& src, int f, int support,
                               const std::function<double(double)>& kernel, bool clip) {
    const auto row_taps = axis_taps(src.rows(), f, support, kernel);
    const auto col_taps = axis_taps(src.cols(), f, support, kernel);
    const std::size_t out_cols = col_taps.size();

    // Horizontal pass at source row resolution, kept in double.
    std::vector<double> wide(src.rows() * out_cols);
    for (std::size_t i = 0; i < src.rows(); ++i) {
        for (std::size_t o = 0; o < out_cols; ++o) {
            const Taps& t = col_taps[o];
            double acc = 0.0;
            for (std::size_t k = 0; k < t.index.size(); ++k) {
                acc += t.weight[k] * src(i, static_cast<std::size_t>(t.index[k]));
            }
            wide[i * out_cols + o] = acc;
        }
    }

    FractionGrid out(row_taps.size(), out_cols);
    for (std::size_t r = 0; r < row_taps.size(); ++r) {
        const Taps& t = row_taps[r];
        for (std::size_t c = 0; c < out_cols; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < t.index.size(); ++k) {
                acc += t.weight[k] * wide[static_cast<std::size_t>(t.index[k]) * out_cols + c];
            }
            if (clip) acc = std::clamp(acc, 0.0, 1.0);
            out(r, c) = static_cast<float>(acc);
        }
    }
    return out;
}

}  // namespace

void validate(const KernelSpec& kernel) {
    if (kernel.kind == KernelKind::bicubic && !(kernel.a < 0.0)) {
        fail(ErrorKind::InvalidConfig, "bicubic sharpness must be negative");
    }
    if (kernel.kind == KernelKind::lanczos && (kernel.lobes < 2 || kernel.lobes > 4)) {
        fail(ErrorKind::InvalidConfig, "lanczos lobes must be 2, 3 or 4");
    }
}

double bicubic_weight(double t, double a) noexcept {
    const double x = std::abs(t);
    if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
    if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
    return 0.0;
}

double lanczos_weight(double t, int lobes) noexcept {
    if (t == 0.0) return 1.0;
    if (std::abs(t) >= lobes) return 0.0;
    return sinc(t) * sinc(t / lobes);
}

FractionGrid interp_upscale(const FractionGrid& wfm, ScaleFactor scale, const KernelSpec& kernel) {
    validate(scale);
    validate(kernel);
    if (kernel.kind == KernelKind::bicubic) {
        const double a = kernel.a;
        return separable_upscale(wfm, scale.f, 2, [a](double t) { return bicubic_weight(t, a); }, true);
    }
    const int lobes = kernel.lobes;
    return separable_upscale(wfm, scale.f, lobes, [lobes](double t) { return lanczos_weight(t, lobes); }, true);
}

FractionGrid bilinear_upscale(const FractionGrid& wfm, ScaleFactor scale) {
    validate(scale);
    return separable_upscale(
        wfm, scale.f, 1, [](double t) { return std::max(0.0, 1.0 - std::abs(t)); }, false);
}

BinaryGrid baseline_downscale(const FractionGrid& wfm, ScaleFactor scale, const KernelSpec& kernel,
                              double theta) {
    return threshold_grid(interp_upscale(wfm, scale, kernel), theta);
}

BinaryGrid naive_downscale(const FractionGrid& wfm, ScaleFactor scale) {
    validate(scale);
    const auto f = static_cast<std::size_t>(scale.f);
    return BinaryGrid(wfm.rows() * f, wfm.cols() * f, 0);
}

}  // namespace floodsr
