#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fundus/features.hpp"
#include "fundus/raster.hpp"
#include "fundus/swat.hpp"

namespace fundus {

struct ConfusionCounts {
    long long tp = 0;
    long long fp = 0;
    long long tn = 0;
    long long fn = 0;

    long long total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

// Positive when at least half the object lies on ground truth.
Label annotate(const ConnectedComponent& object, const BinaryMask& ground_truth, double min_overlap = 0.5);
Label annotate(const Segment& seg, const BinaryMask& ground_truth, double min_overlap = 0.5);

// DIARETDB1-style consensus map (0..255 confidence) to a binary mask.
BinaryMask ground_truth_from_confidence(const Raster& confidence, double min_consensus = 0.75);

ConfusionCounts confusion(const std::vector<Label>& predictions, const std::vector<Label>& labels);

// nullopt when the denominator is zero.
std::optional<double> sensitivity(const ConfusionCounts& c);
std::optional<double> specificity(const ConfusionCounts& c);

struct SplitManifest {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
};

// Seeded shuffle; test gets test_count ids, validation 15% (rounded) of the rest.
SplitManifest make_split(std::vector<std::string> image_ids, std::size_t test_count = 20, std::uint64_t seed = 42);
std::string split_to_json(const SplitManifest& s);
SplitManifest split_from_json(const std::string& text);
void save_split(const SplitManifest& s, const std::string& path);
SplitManifest load_split(const std::string& path);

struct ModelReport {
    std::string name;  // row label: SVM, VGG16, ResNet50, AlexNet
    ConfusionCounts counts;
};

// Row label used in comparison tables for an extractor.
std::string method_name(Extractor e);

// "Methods  SE (%)  SP (%)" table; undefined ratios print as n/a.
std::string format_table(const std::vector<ModelReport>& rows);
std::string format_percent(std::optional<double> v);

}  // namespace fundus
