#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundus/raster.hpp"

namespace fundus {

// Procedural fundus-like images with known lesion geometry: a bright retinal
// disk on black, 3 px vessel curves, dark red lesion disks (some straddling
// the rim, some crossed by vessels) and grey-blue soft shades as negatives.
struct SyntheticConfig {
    int width = 384;
    int height = 384;
    double fov_radius = 175.0;
    int min_lesions = 2;
    int max_lesions = 4;
    double min_radius = 10.0;
    double max_radius = 60.0;
    int vessels = 5;
    int shades = 3;
    double noise_sigma = 1.5;
};

enum class LesionKind { interior, rim, vessel };

struct SyntheticLesion {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;
    LesionKind kind = LesionKind::interior;
};

struct SyntheticImage {
    RgbRaster rgb;
    BinaryMask ground_truth;  // lesion disks clipped to the retinal field
    BinaryMask field;
    std::vector<SyntheticLesion> lesions;
};

// Deterministic in (seed, cfg) for a given standard library.
SyntheticImage make_synthetic(std::uint64_t seed, const SyntheticConfig& cfg = {});

// Pixels of the lesion disk that lie inside the retinal field.
BinaryMask lesion_mask(const SyntheticImage& img, std::size_t lesion_index);

}  // namespace fundus
