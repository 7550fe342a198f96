#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "fundus/pipeline.hpp"

namespace fundus {

// INI-style config: "[section]" headers, "key = value" lines, '#' or ';'
// comments (inline when preceded by whitespace). Keys are addressed as
// section.key; unknown keys are errors.
//
//   [preprocess]  clahe_tiles clahe_clip gamma_min gamma_max sharpen_strength sharpen_threshold
//   [seeds]       sigma support open_radius min_side
//   [calibrate]   median_window mask_threshold min_coverage border_radius search_margin
//   [swat]        max_iter
//   [svm]         C seed epochs class_weighting
//   [eval]        test_count split_seed min_overlap gt_consensus
//   [run]         downscale workers cache_dir

std::vector<std::string> config_keys();

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const PipelineConfig& cfg, const std::string& key);

// Applies the file on top of `base` (defaults unless given).
PipelineConfig parse_config(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::string& path, PipelineConfig base = {});
// "key=value" as given on the command line.
void apply_override(PipelineConfig& cfg, const std::string& assignment);

// Range checks for every field.
void validate_config(const PipelineConfig& cfg);

std::string config_to_ini(const PipelineConfig& cfg);
nlohmann::json config_to_json(const PipelineConfig& cfg);

// Hash of the keys under the given sections; stage cache keys use it.
std::uint64_t config_hash(const PipelineConfig& cfg, const std::vector<std::string>& sections);

}  // namespace fundus
