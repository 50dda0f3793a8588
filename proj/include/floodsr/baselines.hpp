#pragma once

#include "floodsr/grid.hpp"

namespace floodsr {

enum class KernelKind { bicubic, lanczos };

struct KernelSpec {
    KernelKind kind = KernelKind::bicubic;
    double a = -0.5;  // bicubic sharpness
    int lobes = 3;    // lanczos support

    static KernelSpec bicubic(double sharpness = -0.5) { return {KernelKind::bicubic, sharpness, 3}; }
    static KernelSpec lanczos(int lobe_count = 3) { return {KernelKind::lanczos, -0.5, lobe_count}; }
};

void validate(const KernelSpec& kernel);

/// Keys cubic convolution kernel.
double bicubic_weight(double t, double a = -0.5) noexcept;
/// sinc(t) * sinc(t / lobes) on |t| < lobes, normalized sinc.
double lanczos_weight(double t, int lobes = 3) noexcept;

/// Upsamples by f with pixel-center alignment, clamp-to-edge sampling and
/// per-pixel weight renormalization; output clipped to [0, 1].
FractionGrid interp_upscale(const FractionGrid& wfm, ScaleFactor scale, const KernelSpec& kernel);

/// Same alignment and edge rule with the tent kernel. No clipping needed.
FractionGrid bilinear_upscale(const FractionGrid& wfm, ScaleFactor scale);

BinaryGrid baseline_downscale(const FractionGrid& wfm, ScaleFactor scale, const KernelSpec& kernel,
                              double theta = 0.5);

/// The majority-class predictor: everything dry.
BinaryGrid naive_downscale(const FractionGrid& wfm, ScaleFactor scale);

}  // namespace floodsr
