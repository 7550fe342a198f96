#pragma once

#include <array>
#include <string>
#include <vector>

#include "fundus/raster.hpp"
#include "fundus/seeds.hpp"

namespace fundus {

// Result of the multi-level between-region variance search.
struct OtsuResult {
    std::vector<int> thresholds;  // R-1 strictly increasing gray levels; region z is (t[z-1], t[z]]
    double sigma_b2 = 0.0;        // weighted between-region variance at the optimum
    double sigma_t2 = 0.0;        // total variance of the histogram
    double eta = 0.0;             // sigma_b2 / sigma_t2
    int regions = 0;              // R
};

inline constexpr int kMinRegions = 2;
inline constexpr int kMaxRegions = 20;
inline constexpr double kEtaTarget = 0.8;

// Between-region variance for an explicit threshold tuple; empty regions
// contribute nothing.
double between_region_variance(const Histogram& hist, const std::vector<int>& thresholds);

// Exact maximiser over all strictly increasing (R-1)-tuples. Ties resolve to
// the lexicographically smallest tuple.
OtsuResult multilevel_otsu(const Histogram& hist, int regions);

// Grows R from 2 while eta < 0.8, R < 20 and enough occupied levels remain.
OtsuResult adaptive_thresholds(const Histogram& hist);

// 1 where the pixel is at or below the lowest threshold.
BinaryMask binarize_min(const Raster& window, const std::vector<int>& thresholds);

struct PrunedObject {
    BinaryMask mask;
    ConnectedComponent object;
    double distance = 0.0;  // nearest-pixel distance to the window centre
};

// Keep the two largest components, then the one nearest the window centre.
PrunedObject prune_objects(const BinaryMask& mask);

// Left, top, right, bottom.
using BorderFlags = std::array<bool, 4>;
BorderFlags border_flags(const BinaryMask& object_mask);
inline bool any_flag(const BorderFlags& q) { return q[0] || q[1] || q[2] || q[3]; }

inline constexpr int kGrowLeftTop = 5;
inline constexpr int kGrowRightBottom = 10;

struct Expansion {
    BBox window;
    bool within_search_space = true;
};

// Moves each flagged edge outward (left/top by 5, right/bottom by 10, clipped
// to the image). If any moved edge no longer touches S the window is returned
// unchanged with within_search_space = false.
Expansion expand_window(const BBox& window, const BorderFlags& q, const BinaryMask& search_space);

enum class SegmentStatus { complete, clipped_by_search_space, iteration_cap };
std::string to_string(SegmentStatus s);
SegmentStatus segment_status_from_string(const std::string& s);

struct Segment {
    int seed_id = 0;
    ConnectedComponent object;  // image coordinates
    BBox window;
    SegmentStatus status = SegmentStatus::complete;
    int iterations = 0;
};

struct SwatConfig {
    int max_iter = 200;
};

// Throws DegenerateWindow when a crop has no intensity variance.
Segment swat_segment(const Raster& calibrated, const SeedWindow& seed, const BinaryMask& search_space,
                     const SwatConfig& cfg = {});

struct SegmentationRun {
    std::vector<Segment> segments;
    struct Discarded {
        int seed_id;
        std::string reason;
    };
    std::vector<Discarded> discarded;
};

// All seeds in order; degenerate windows are reported instead of segmented.
SegmentationRun segment_all(const Raster& calibrated, const std::vector<SeedWindow>& seeds,
                            const BinaryMask& search_space, const SwatConfig& cfg = {});

// Run-length encoding of an object inside its window, row-major:
// [start, length, start, length, ...] with start relative to the window.
std::vector<int> encode_rle(const ConnectedComponent& object, const BBox& window);
ConnectedComponent decode_rle(const std::vector<int>& rle, const BBox& window, int label = 1);

}  // namespace fundus
