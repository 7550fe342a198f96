#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "fundus/eval.hpp"
#include "fundus/pipeline.hpp"

namespace fundus {

// Dataset layout:
//   images/<id>.png        fundus photographs
//   masks/<id>.png         binary lesion ground truth (optional)
//   confidence/<id>.png    expert consensus maps, used when no binary mask exists
//   features/<tag>.jsonl   deep feature records written by the external extractor
struct Dataset {
    std::string root;
    std::vector<std::string> ids;  // sorted

    std::string image_path(const std::string& id) const;
    std::string feature_path(Extractor e) const;
    std::optional<std::string> mask_path(const std::string& id) const;
    std::optional<std::string> confidence_path(const std::string& id) const;
};

Dataset open_dataset(const std::string& root);

// Binary ground truth at processing resolution, if the dataset has one.
std::optional<BinaryMask> load_ground_truth(const Dataset& ds, const std::string& id, const PipelineConfig& cfg);

std::string image_id_from_path(const std::string& path);

// --- per-stage serialisation ---

std::string seeds_to_json(const std::vector<SeedWindow>& seeds);
std::vector<SeedWindow> seeds_from_json(const std::string& text);
std::string segment_to_jsonl(const Segment& seg);
Segment segment_from_jsonl(const std::string& line);

// --- conventional features over many images ---

struct ImageRecords {
    std::string image_id;
    std::vector<FeatureRecord> records;
    std::string error;  // empty on success
};

// Conventional records for the given images, labelled when ground truth
// exists. Parallel over images, cached by content hash, output in id order.
std::vector<ImageRecords> conventional_records(const Dataset& ds, const std::vector<std::string>& ids,
                                               const PipelineConfig& cfg);

// Records of any extractor restricted to `ids`. Deep extractors read
// features/<tag>.jsonl and fail with the expected path when it is missing.
std::vector<FeatureRecord> dataset_records(const Dataset& ds, const std::vector<std::string>& ids, Extractor e,
                                           const PipelineConfig& cfg);

std::vector<FeatureRecord> labelled_only(std::vector<FeatureRecord> records);

ConfusionCounts evaluate(const SvmModel& model, const std::vector<FeatureRecord>& records);

struct TrainResult {
    SvmModel model;
    ConfusionCounts train;
    std::optional<ConfusionCounts> validation;
};

// Trains on split.train, validates on split.validation.
TrainResult run_train(const Dataset& ds, const SplitManifest& split, Extractor e, const PipelineConfig& cfg);
TrainResult train_on_records(const std::vector<FeatureRecord>& train, const std::vector<FeatureRecord>& validation,
                             const PipelineConfig& cfg);

// Each model is evaluated on split.test with its own extractor's features.
std::vector<ModelReport> run_compare(const Dataset& ds, const SplitManifest& split,
                                     const std::vector<SvmModel>& models, const PipelineConfig& cfg);
nlohmann::json report_json(const std::vector<ModelReport>& rows, const PipelineConfig& cfg);

struct Detection {
    std::string image_id;
    std::string window_id;
    BBox bbox;
    Label label = Label::negative;
    double margin = 0.0;
};

struct DetectionRun {
    std::vector<std::string> lines;  // JSONL: detections and per-image error records, input order
    std::vector<Detection> detections;
    std::size_t failed_images = 0;
};

// Overlays go to overlay_dir/<id>.png when the directory is non-empty.
DetectionRun run_detect(const std::vector<std::string>& image_paths, const SvmModel& model,
                        const PipelineConfig& cfg, const std::string& overlay_dir = {});

struct ExportSummary {
    std::size_t windows = 0;
    std::vector<std::string> errors;
};

// out_dir/crops/<window_id>.png (RGB window crop) and out_dir/manifest.jsonl
// with {window_id, image_id, bbox, label} per window.
ExportSummary export_windows(const Dataset& ds, const std::vector<std::string>& ids, const PipelineConfig& cfg,
                             const std::string& out_dir);

// Synthetic dataset: images/, masks/ and ids img000 ... for the given seeds.
void write_synthetic_dataset(const std::string& root, int count, std::uint64_t first_seed);

}  // namespace fundus
