#pragma once

#include <optional>
#include <vector>

#include "fundus/raster.hpp"

namespace fundus {

struct MatchedFilterConfig {
    double sigma = 4.0;
    double support = 3.0;  // kernel half-width in sigma units
};

struct SeedConfig {
    MatchedFilterConfig filter;
    int open_radius = 4;
    int min_side = 15;
};

// Candidate window from one connected seed component.
struct SeedWindow {
    BBox bbox;
    int component = 0;
};

// Zero-sum inverted Gaussian taps, (2h+1)^2 row-major with h = ceil(support*sigma).
std::vector<double> matched_kernel(const MatchedFilterConfig& cfg, int& half_width);

// Correlation with the inverted Gaussian; dark blobs on bright tissue respond
// positively. Edge replication at the frame.
RealRaster matched_filter(const RealRaster& img, const MatchedFilterConfig& cfg = {});
RealRaster matched_filter(const Raster& img, const MatchedFilterConfig& cfg = {});

// Joint histogram of (pixel value, rounded 3x3 mean).
struct CoHistogram {
    static constexpr int kLevels = 256;
    std::vector<double> cells = std::vector<double>(kLevels * kLevels, 0.0);

    double& at(int value, int mean) { return cells[static_cast<std::size_t>(value) * kLevels + mean]; }
    double at(int value, int mean) const { return cells[static_cast<std::size_t>(value) * kLevels + mean]; }
};

CoHistogram co_histogram(const Raster& img);

// Cross entropy of the diagonal quadrants [0,t]^2 and (t,255]^2 against their
// mean levels. Returns nullopt when a quadrant is empty.
std::optional<double> cross_entropy_objective(const CoHistogram& h, int t);

// Level minimising the two-quadrant cross entropy; throws when no level splits
// the histogram into two populated quadrants.
int cross_entropy_threshold(const CoHistogram& h);
int glcm_cross_entropy_threshold(const Raster& response);

// Window of at least min_side per axis around a component, kept inside the frame.
SeedWindow seed_window(const ConnectedComponent& cc, int width, int height, int min_side);

struct SeedMaps {
    Raster response;     // normalized matched-filter response
    int threshold = 0;
    BinaryMask binary;   // response > threshold (restricted to the region, if one is given)
    BinaryMask opened;
    std::vector<SeedWindow> seeds;
};

// Matched filter -> cross-entropy threshold -> opening -> component windows.
// `region` (e.g. the retinal mask) restricts where seeds may come from.
SeedMaps seed_maps(const Raster& img, const SeedConfig& cfg = {}, const BinaryMask* region = nullptr);
std::vector<SeedWindow> extract_seeds(const Raster& img, const SeedConfig& cfg = {},
                                      const BinaryMask* region = nullptr);

}  // namespace fundus
