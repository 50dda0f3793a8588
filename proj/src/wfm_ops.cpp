#include "floodsr/wfm_ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace floodsr {

FractionGrid aggregate(const BinaryGrid& fim, ScaleFactor scale) {
    validate(scale);
    const auto f = static_cast<std::size_t>(scale.f);
    if (fim.rows() % f != 0 || fim.cols() % f != 0) {
        fail(ErrorKind::IndivisibleDimensions,
             "FIM " + std::to_string(fim.rows()) + "x" + std::to_string(fim.cols()) +
                 " not divisible by " + std::to_string(f));
    }
    const float area = static_cast<float>(f * f);
    FractionGrid wfm(fim.rows() / f, fim.cols() / f);
    for (std::size_t i = 0; i < wfm.rows(); ++i) {
        for (std::size_t j = 0; j < wfm.cols(); ++j) {
            unsigned wet = 0;
            for (std::size_t k = 0; k < f; ++k) {
                for (std::size_t l = 0; l < f; ++l) wet += fim(f * i + k, f * j + l);
            }
            wfm(i, j) = static_cast<float>(wet) / area;
        }
    }
    return wfm;
}

BinaryGrid band_mask(const FractionGrid& wfm, BandLimits band, ScaleFactor scale) {
    validate(scale);
    validate(band);
    const auto f = static_cast<std::size_t>(scale.f);
    BinaryGrid mask(wfm.rows() * f, wfm.cols() * f, 0);
    for (std::size_t i = 0; i < wfm.rows(); ++i) {
        for (std::size_t j = 0; j < wfm.cols(); ++j) {
            if (!band.contains(wfm(i, j))) continue;
            for (std::size_t k = 0; k < f; ++k) {
                for (std::size_t l = 0; l < f; ++l) mask(f * i + k, f * j + l) = 1;
            }
        }
    }
    return mask;
}

FractionGrid swi(const FractionGrid& blue, const FractionGrid& green, const FractionGrid& red,
                 const FractionGrid& nir) {
    require_same_shape(blue, green, "swi(green)");
    require_same_shape(blue, red, "swi(red)");
    require_same_shape(blue, nir, "swi(nir)");
    FractionGrid out(blue.rows(), blue.cols());
    for (std::size_t k = 0; k < blue.size(); ++k) {
        const double denom = static_cast<double>(red[k]) + green[k] + blue[k];
        if (denom <= 0.0) fail(ErrorKind::ZeroDenominator, "red+green+blue <= 0 at cell " + std::to_string(k));
        out[k] = static_cast<float>((static_cast<double>(blue[k]) - nir[k]) / denom);
    }
    return out;
}

BinaryGrid threshold_grid(const FractionGrid& grid, double theta) {
    BinaryGrid out(grid.rows(), grid.cols());
    for (std::size_t k = 0; k < grid.size(); ++k) out[k] = grid[k] >= theta ? 1 : 0;
    return out;
}

double otsu_threshold(const FractionGrid& grid) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -lo;
    for (float v : grid.cells()) {
        if (!std::isfinite(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(lo < hi)) fail(ErrorKind::DomainError, "otsu threshold needs at least two distinct values");

    constexpr int kBins = 256;
    std::array<double, kBins> hist{};
    const double width = (static_cast<double>(hi) - lo) / kBins;
    double total = 0.0;
    for (float v : grid.cells()) {
        if (!std::isfinite(v)) continue;
        const int b = std::min(kBins - 1, static_cast<int>((v - lo) / width));
        hist[static_cast<std::size_t>(b)] += 1.0;
        total += 1.0;
    }
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += b * hist[static_cast<std::size_t>(b)];

    double w0 = 0.0;
    double sum0 = 0.0;
    double best = -1.0;
    int best_bin = 0;
    for (int b = 0; b < kBins - 1; ++b) {
        w0 += hist[static_cast<std::size_t>(b)];
        sum0 += b * hist[static_cast<std::size_t>(b)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = b;
        }
    }
    // Cut at the upper edge of the last background bin.
    return lo + width * (best_bin + 1);
}

std::size_t count_ones(const BinaryGrid& grid) noexcept {
    std::size_t n = 0;
    for (auto c : grid.cells()) n += c;
    return n;
}

}  // namespace floodsr
