#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fundus/raster.hpp"
#include "fundus/swat.hpp"

namespace fundus {

enum class Label { positive, negative, unlabeled };
std::string to_string(Label l);
Label label_from_string(const std::string& s);

enum class Extractor { conventional, vgg16, resnet50, alexnet };
std::string to_string(Extractor e);
Extractor extractor_from_string(const std::string& s);
std::size_t feature_dim(Extractor e);

inline constexpr std::size_t kConventionalDim = 28;
const std::array<std::string, kConventionalDim>& conventional_feature_names();

struct FeatureRecord {
    std::string window_id;
    std::string image_id;
    BBox bbox;
    Label label = Label::unlabeled;
    Extractor extractor = Extractor::conventional;
    std::vector<double> values;
    std::vector<std::string> names;  // conventional only
    bool scaled = false;             // in-memory only; set by apply_scaler
};

// Throws Error describing the first violated invariant.
void validate(const FeatureRecord& r);

// One JSON object per line; field order free.
std::string to_jsonl(const FeatureRecord& r);
FeatureRecord record_from_json(const std::string& line);
std::vector<FeatureRecord> read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const std::vector<FeatureRecord>& records);

struct ValidationReport {
    std::size_t records = 0;
    std::vector<std::string> violations;  // "line N: reason"
    bool ok() const { return violations.empty(); }
};
ValidationReport validate_feature_file(const std::string& path, std::optional<Extractor> expected = std::nullopt);

// --- conventional extractor ---

// area, perimeter, circularity, eccentricity, solidity, extent, aspect ratio,
// equivalent diameter. Perimeter is the crack length scaled by pi/4;
// circularity is capped at 1.
std::array<double, 8> cc_features(const ConnectedComponent& object);

// 16-level co-occurrence matrix, averaged over offsets (0,1), (1,0), (1,1), (1,-1)
// given as (dy,dx). Probabilities, row = reference pixel level.
std::vector<double> glcm(const Raster& window, int levels = 16);
// contrast, correlation, energy, homogeneity, entropy.
std::array<double, 5> glcm_texture_features(const Raster& window);

struct Lab {
    double l, a, b;
};
Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// L*, a*, b* means and standard deviations inside the object, then the
// object-minus-surround mean differences. The surround is the rest of the window.
std::array<double, 9> color_features(const RgbRaster& rgb_window, const BinaryMask& object_in_window);

struct HarrisConfig {
    double k = 0.04;
    double relative_threshold = 0.01;
};
std::vector<Point> harris_corners(const Raster& window, const HarrisConfig& cfg = {});

// closed-contour flag, corner count, corner-to-centroid distance mean and std,
// boundary-band Laplacian mean, boundary-band gradient mean.
std::array<double, 6> handcrafted_features(const Raster& window, const BinaryMask& object_in_window);

// Rasters a segment's features are drawn from.
struct ImageContext {
    std::string image_id;
    const RgbRaster* rgb = nullptr;
    const Raster* enhanced = nullptr;
};

std::string window_id(const std::string& image_id, int index);
FeatureRecord extract_conventional(const ImageContext& ctx, const Segment& seg, const std::string& window_id);

// --- scaling ---

struct ScalerStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population standard deviation
};

ScalerStats fit_scaler(std::span<const FeatureRecord> records);
// Zero-variance dimensions pass through. Throws if the record is already scaled.
FeatureRecord apply_scaler(const ScalerStats& stats, const FeatureRecord& record);

}  // namespace fundus
