#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fundus/calibrate.hpp"
#include "fundus/features.hpp"
#include "fundus/preprocess.hpp"
#include "fundus/seeds.hpp"
#include "fundus/svm.hpp"
#include "fundus/swat.hpp"

namespace fundus {

struct EvalConfig {
    int test_count = 20;
    std::uint64_t split_seed = 42;
    double min_overlap = 0.5;
    double gt_consensus = 0.75;  // confidence-map ingestion level
};

struct PipelineConfig {
    PreprocessConfig preprocess;
    CalibrateConfig calibrate;
    SeedConfig seeds;
    SwatConfig swat;
    TrainOptions svm;
    EvalConfig eval;
    int downscale = 1;  // integer box-average factor applied on load
    int workers = 1;
    std::string cache_dir;  // empty: caching off
};

// Every stage of one image, in pipeline order.
struct ImageAnalysis {
    RgbRaster rgb;  // after downscale
    Raster enhanced;
    CalibrationProducts calibration;
    SeedMaps seeds;
    SegmentationRun segmentation;
};

RgbRaster downscale(const RgbRaster& img, int factor);
BinaryMask downscale(const BinaryMask& mask, int factor);  // majority vote

// Calibrated plane with everything outside mask AND NOT border set to the
// median retinal level, so the bright frame gives no filter response.
Raster seed_plane(const CalibrationProducts& calibration);

// Enhance -> calibrate -> seeds (on the calibrated plane inside the retina) -> SWAT.
ImageAnalysis analyze_image(const RgbRaster& rgb, const PipelineConfig& cfg);

// One conventional record per segment, in seed order. Labels come from the
// ground truth when given.
std::vector<FeatureRecord> window_records(const std::string& image_id, const ImageAnalysis& a,
                                          const BinaryMask* ground_truth, double min_overlap);

// Contours of segment objects (positive: red, negative: yellow, unknown: cyan)
// drawn on the image.
RgbRaster overlay(const RgbRaster& img, const std::vector<Segment>& segments,
                  const std::vector<Label>& labels = {});
RgbRaster overlay_seeds(const RgbRaster& img, const std::vector<SeedWindow>& seeds);

// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// Content-addressed text blobs on disk. A disabled cache never hits.
class StageCache {
public:
    explicit StageCache(std::string dir);
    bool enabled() const { return !dir_.empty(); }
    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& value) const;

private:
    std::string dir_;
};

// fn(i) for i in [0,n) on up to `workers` threads. Results keep index order;
// the first exception (lowest index) is rethrown after all tasks finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace fundus
