#pragma once

#include "fundus/raster.hpp"

namespace fundus {

struct CalibrateConfig {
    int median_window = 25;
    int mask_threshold = 15;         // foreground: median-filtered green > this
    double min_coverage = 0.30;      // below this the Otsu level is used instead
    int border_radius = 5;
    int search_margin = 80;
};

struct CalibrationProducts {
    BinaryMask retinal_mask;
    BinaryMask retinal_border;
    Raster calibrated;
    BinaryMask search_space;
};

// Largest bright component of the median-filtered green plane with holes filled.
BinaryMask retinal_mask(const RgbRaster& img, const CalibrateConfig& cfg = {});

// mask AND NOT erode(mask, disk(radius)); radius 0 gives an empty ring.
BinaryMask retinal_border(const BinaryMask& mask, int radius);

// Saturating sum of the enhanced green plane, 255 * NOT(mask) and 255 * border.
Raster calibrate(const Raster& enhanced_green, const BinaryMask& mask, const BinaryMask& border);

// dilate(mask, disk(margin)), which stays inside the frame by construction.
BinaryMask search_space(const BinaryMask& mask, int margin = 80);

CalibrationProducts calibrate_image(const RgbRaster& img, const Raster& enhanced_green,
                                    const CalibrateConfig& cfg = {});

}  // namespace fundus
