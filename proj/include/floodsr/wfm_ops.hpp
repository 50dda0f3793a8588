#pragma once

#include "floodsr/grid.hpp"

namespace floodsr {

/// Mean of each f x f patch. Values land on the lattice {0, 1/f^2, ..., 1}.
FractionGrid aggregate(const BinaryGrid& fim, ScaleFactor scale = ScaleFactor{});

/// High-resolution mask selecting children of WFM cells strictly inside the band.
BinaryGrid band_mask(const FractionGrid& wfm, BandLimits band = BandLimits{},
                     ScaleFactor scale = ScaleFactor{});

/// Spectral water index (blue - nir) / (red + green + blue), cellwise.
FractionGrid swi(const FractionGrid& blue, const FractionGrid& green, const FractionGrid& red,
                 const FractionGrid& nir);

/// 1 where cell >= theta.
BinaryGrid threshold_grid(const FractionGrid& grid, double theta = 0.5);

/// Otsu's between-class-variance threshold over a 256-bin histogram of the
/// finite values. Convenience for picking an SWI cut; not part of the
/// downscaling method itself.
double otsu_threshold(const FractionGrid& grid);

std::size_t count_ones(const BinaryGrid& grid) noexcept;

}  // namespace floodsr
