#pragma once

#include "fundus/raster.hpp"

namespace fundus {

struct PreprocessConfig {
    int clahe_tiles = 8;           // tile grid count per axis
    double clahe_clip = 0.01;      // per-bin clip limit as a fraction of tile pixels
    double gamma_min = 0.5;
    double gamma_max = 2.5;
    double sharpen_strength = 0.8;  // lambda, in [0,2]
    double sharpen_threshold = 20.0;  // T, in (0,255]

    void validate() const;
};

// Clip-limited per-tile equalization with bilinear blending of the four
// surrounding tile maps.
Raster clahe(const Raster& img, const PreprocessConfig& cfg = {});

// Edge-anchored gamma: the Sobel-magnitude-weighted mean brightness is mapped
// to 0.5. Falls back to the plain mean when the image has no gradient.
double gagc_gamma(const Raster& img, const PreprocessConfig& cfg = {});
Raster apply_gamma(const Raster& img, double gamma);
Raster gagc(const Raster& img, const PreprocessConfig& cfg = {});

// Non-linear sharpener over the 3x3 neighbourhood. The detail term is the mean
// centre-neighbour difference; it is weighted by a ramp membership min(1,|d|/T)
// so small-amplitude noise is barely amplified.
Raster fuzzy_unsharp(const Raster& img, const PreprocessConfig& cfg = {});

// green -> CLAHE -> GAGC -> sharpen.
Raster preprocess(const RgbRaster& img, const PreprocessConfig& cfg = {});

}  // namespace fundus
