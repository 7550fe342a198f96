#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "fundus/config.hpp"
#include "fundus/png_io.hpp"
#include "fundus/workflow.hpp"

namespace fs = std::filesystem;
using namespace fundus;
using nlohmann::json;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    int workers = 0;
    bool no_cache = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "INI config file");
    app->add_option("--set", c.overrides, "Override a config key (key=value), repeatable");
    app->add_option("--workers", c.workers, "Image-level worker threads");
    app->add_flag("--no-cache", c.no_cache, "Disable the on-disk stage cache");
}

// Config file, then --set overrides, then flags; cache dir from the
// environment wins over the config file.
PipelineConfig resolve(const Common& c, const std::string& dataset = {}) {
    PipelineConfig cfg;
    if (!c.config_path.empty()) cfg = load_config(c.config_path);
    for (const auto& o : c.overrides) apply_override(cfg, o);
    if (c.workers > 0) cfg.workers = c.workers;
    if (const char* env = std::getenv("FUNDUS_HE_CACHE"); env && *env) cfg.cache_dir = env;
    if (cfg.cache_dir.empty() && !dataset.empty()) cfg.cache_dir = (fs::path(dataset) / ".cache").string();
    if (c.no_cache) cfg.cache_dir.clear();
    validate_config(cfg);
    return cfg;
}

std::vector<std::string> split_ids(const Dataset& ds, const std::string& split_path, const std::string& subset) {
    if (split_path.empty()) return ds.ids;
    const SplitManifest s = load_split(split_path);
    if (subset == "train") return s.train;
    if (subset == "validation") return s.validation;
    if (subset == "test") return s.test;
    if (subset == "all") {
        std::vector<std::string> ids = s.train;
        ids.insert(ids.end(), s.validation.begin(), s.validation.end());
        ids.insert(ids.end(), s.test.begin(), s.test.end());
        std::sort(ids.begin(), ids.end());
        return ids;
    }
    throw Error("unknown subset " + subset + " (train, validation, test, all)");
}

void print_counts(const std::string& what, const ConfusionCounts& c) {
    std::cout << what << ": TP=" << c.tp << " FP=" << c.fp << " TN=" << c.tn << " FN=" << c.fn
              << " SE=" << format_percent(sensitivity(c)) << "% SP=" << format_percent(specificity(c)) << "%\n";
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retinal hemorrhage detection: enhancement, seeds, SWAT segmentation, features, SVM"};
    app.require_subcommand(1);

    // enhance
    Common enhance_c;
    std::string enhance_in, enhance_out;
    auto* enhance = app.add_subcommand("enhance", "CLAHE, gamma correction and fuzzy sharpening of the green plane");
    enhance->add_option("--image", enhance_in, "Input fundus PNG")->required();
    enhance->add_option("--out", enhance_out, "Enhanced PNG")->required();
    add_common(enhance, enhance_c);

    // calibrate
    Common calib_c;
    std::string calib_in, calib_dir;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "Retinal mask, border, calibrated plane and search space");
    calibrate_cmd->add_option("--image", calib_in, "Input fundus PNG")->required();
    calibrate_cmd->add_option("--out-dir", calib_dir, "Directory for the PNG products")->required();
    add_common(calibrate_cmd, calib_c);

    // seeds
    Common seeds_c;
    std::string seeds_in, seeds_out, seeds_overlay;
    auto* seeds_cmd = app.add_subcommand("seeds", "Matched filter, cross-entropy threshold, opening, seed windows");
    seeds_cmd->add_option("--image", seeds_in, "Input fundus PNG")->required();
    seeds_cmd->add_option("--out", seeds_out, "Seed JSON")->required();
    seeds_cmd->add_option("--overlay", seeds_overlay, "Seed boxes drawn on the image");
    add_common(seeds_cmd, seeds_c);

    // segment
    Common seg_c;
    std::string seg_cal, seg_space, seg_seeds, seg_out, seg_overlay, seg_image;
    auto* segment_cmd = app.add_subcommand("segment", "SWAT segmentation of every seed window");
    segment_cmd->add_option("--calibrated", seg_cal, "Calibrated PNG")->required();
    segment_cmd->add_option("--search-space", seg_space, "Search space mask PNG")->required();
    segment_cmd->add_option("--seeds", seg_seeds, "Seed JSON")->required();
    segment_cmd->add_option("--out", seg_out, "Segment JSONL")->required();
    segment_cmd->add_option("--overlay", seg_overlay, "Object contours drawn on --image");
    segment_cmd->add_option("--image", seg_image, "Original image for the overlay");
    add_common(segment_cmd, seg_c);

    // features
    Common feat_c;
    std::string feat_dataset, feat_split, feat_subset = "all", feat_out, feat_image, feat_mask;
    auto* features_cmd = app.add_subcommand("features", "Conventional feature records (JSONL)");
    features_cmd->add_option("--dataset", feat_dataset, "Dataset directory");
    features_cmd->add_option("--split", feat_split, "Split manifest restricting the images");
    features_cmd->add_option("--subset", feat_subset, "train, validation, test or all");
    features_cmd->add_option("--image", feat_image, "Single image instead of a dataset");
    features_cmd->add_option("--mask", feat_mask, "Ground-truth mask for --image");
    features_cmd->add_option("--out", feat_out, "Feature JSONL")->required();
    add_common(features_cmd, feat_c);

    // export-windows
    Common exp_c;
    std::string exp_dataset, exp_split, exp_subset = "all", exp_out;
    auto* export_cmd = app.add_subcommand("export-windows", "Window crops and manifest for deep feature extraction");
    export_cmd->add_option("--dataset", exp_dataset, "Dataset directory")->required();
    export_cmd->add_option("--split", exp_split, "Split manifest restricting the images");
    export_cmd->add_option("--subset", exp_subset, "train, validation, test or all");
    export_cmd->add_option("--out", exp_out, "Output directory (crops/ and manifest.jsonl)")->required();
    add_common(export_cmd, exp_c);

    // train
    Common train_c;
    std::string train_features, train_validation, train_dataset, train_split, train_extractor = "conventional",
                                                                              train_out;
    std::optional<double> train_C;
    std::optional<std::uint64_t> train_seed;
    std::vector<double> train_grid;
    auto* train_cmd = app.add_subcommand("train", "Train a linear SVM on feature records");
    train_cmd->add_option("--features", train_features, "Training feature JSONL");
    train_cmd->add_option("--validation", train_validation, "Validation feature JSONL");
    train_cmd->add_option("--dataset", train_dataset, "Dataset directory (with --split)");
    train_cmd->add_option("--split", train_split, "Split manifest");
    train_cmd->add_option("--extractor", train_extractor, "conventional, vgg16, resnet50 or alexnet");
    train_cmd->add_option("--C", train_C, "Regularisation constant");
    train_cmd->add_option("--seed", train_seed, "Training seed");
    train_cmd->add_option("--grid", train_grid, "Candidate C values; best validation (SE+SP)/2 wins")->delimiter(',');
    train_cmd->add_option("--out", train_out, "Model JSON")->required();
    add_common(train_cmd, train_c);

    // detect
    Common det_c;
    std::string det_model, det_out, det_overlay;
    std::vector<std::string> det_images;
    auto* detect_cmd = app.add_subcommand("detect", "Full pipeline and classification on images");
    detect_cmd->add_option("--model", det_model, "Conventional model JSON")->required();
    detect_cmd->add_option("--out", det_out, "Detection JSONL")->required();
    detect_cmd->add_option("--overlay-dir", det_overlay, "Directory for overlay PNGs");
    detect_cmd->add_option("images", det_images, "Input PNGs")->required();
    add_common(detect_cmd, det_c);

    // eval
    Common eval_c;
    std::string eval_dataset, eval_split, eval_model, eval_features, eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "Window-level SE/SP of one model on the test split");
    eval_cmd->add_option("--model", eval_model, "Model JSON")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "Dataset directory (with --split)");
    eval_cmd->add_option("--split", eval_split, "Split manifest");
    eval_cmd->add_option("--features", eval_features, "Labelled feature JSONL instead of a dataset");
    eval_cmd->add_option("--out", eval_out, "JSON report");
    add_common(eval_cmd, eval_c);

    // compare
    Common cmp_c;
    std::string cmp_dataset, cmp_split, cmp_out;
    std::vector<std::string> cmp_models;
    auto* compare_cmd = app.add_subcommand("compare", "Comparison table over several models");
    compare_cmd->add_option("--dataset", cmp_dataset, "Dataset directory")->required();
    compare_cmd->add_option("--split", cmp_split, "Split manifest")->required();
    compare_cmd->add_option("--model", cmp_models, "Model JSON, repeatable")->required();
    compare_cmd->add_option("--out", cmp_out, "JSON report");
    add_common(compare_cmd, cmp_c);

    // split
    Common split_c;
    std::string split_dataset, split_out;
    std::optional<int> split_test;
    std::optional<std::uint64_t> split_seed;
    auto* split_cmd = app.add_subcommand("split", "Seeded train/validation/test split of a dataset");
    split_cmd->add_option("--dataset", split_dataset, "Dataset directory")->required();
    split_cmd->add_option("--test-count", split_test, "Test images");
    split_cmd->add_option("--seed", split_seed, "Shuffle seed");
    split_cmd->add_option("--out", split_out, "Split manifest JSON")->required();
    add_common(split_cmd, split_c);

    // make-synthetic
    std::string syn_out;
    int syn_count = 50;
    std::uint64_t syn_seed = 1000;
    auto* synth_cmd = app.add_subcommand("make-synthetic", "Write a synthetic dataset with known lesions");
    synth_cmd->add_option("--out", syn_out, "Dataset directory")->required();
    synth_cmd->add_option("--count", syn_count, "Number of images");
    synth_cmd->add_option("--seed", syn_seed, "Seed of the first image");

    // validate
    std::string val_features, val_extractor;
    auto* validate_cmd = app.add_subcommand("validate", "Schema check of a feature JSONL file");
    validate_cmd->add_option("--features", val_features, "Feature JSONL")->required();
    validate_cmd->add_option("--extractor", val_extractor, "Expected extractor tag");

    // print-config
    Common pc_c;
    auto* print_cmd = app.add_subcommand("print-config", "Resolved configuration as INI");
    add_common(print_cmd, pc_c);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*enhance) {
            const auto cfg = resolve(enhance_c);
            write_png(enhance_out, preprocess(downscale(read_png_rgb(enhance_in), cfg.downscale), cfg.preprocess));
        } else if (*calibrate_cmd) {
            const auto cfg = resolve(calib_c);
            const auto rgb = downscale(read_png_rgb(calib_in), cfg.downscale);
            const auto enhanced = preprocess(rgb, cfg.preprocess);
            const auto p = calibrate_image(rgb, enhanced, cfg.calibrate);
            const fs::path dir(calib_dir);
            fs::create_directories(dir);
            write_png(dir / "enhanced.png", enhanced);
            write_png(dir / "mask.png", p.retinal_mask);
            write_png(dir / "border.png", p.retinal_border);
            write_png(dir / "calibrated.png", p.calibrated);
            write_png(dir / "search_space.png", p.search_space);
        } else if (*seeds_cmd) {
            const auto cfg = resolve(seeds_c);
            const auto rgb = downscale(read_png_rgb(seeds_in), cfg.downscale);
            const auto enhanced = preprocess(rgb, cfg.preprocess);
            const auto p = calibrate_image(rgb, enhanced, cfg.calibrate);
            const auto maps = seed_maps(seed_plane(p), cfg.seeds, &p.retinal_mask);
            write_file(seeds_out, seeds_to_json(maps.seeds) + "\n");
            if (!seeds_overlay.empty()) write_png(seeds_overlay, overlay_seeds(rgb, maps.seeds));
            std::cout << maps.seeds.size() << " seeds (threshold " << maps.threshold << ")\n";
        } else if (*segment_cmd) {
            const auto cfg = resolve(seg_c);
            const Raster cal = read_png_gray(seg_cal);
            const BinaryMask space = read_png_mask(seg_space);
            const auto seeds = seeds_from_json(read_file(seg_seeds));
            const auto run = segment_all(cal, seeds, space, cfg.swat);
            std::string out;
            for (const auto& s : run.segments) out += segment_to_jsonl(s) + "\n";
            write_file(seg_out, out);
            for (const auto& d : run.discarded) std::cerr << "seed " << d.seed_id << " discarded: " << d.reason << "\n";
            if (!seg_overlay.empty()) {
                if (seg_image.empty()) throw Error("--overlay needs --image");
                write_png(seg_overlay, overlay(downscale(read_png_rgb(seg_image), cfg.downscale), run.segments));
            }
            std::cout << run.segments.size() << " segments, " << run.discarded.size() << " discarded\n";
        } else if (*features_cmd) {
            std::vector<FeatureRecord> records;
            if (!feat_image.empty()) {
                const auto cfg = resolve(feat_c);
                const auto a = analyze_image(read_png_rgb(feat_image), cfg);
                std::optional<BinaryMask> gt;
                if (!feat_mask.empty()) gt = downscale(read_png_mask(feat_mask), cfg.downscale);
                records = window_records(image_id_from_path(feat_image), a, gt ? &*gt : nullptr, cfg.eval.min_overlap);
            } else {
                if (feat_dataset.empty()) throw Error("features needs --dataset or --image");
                const auto cfg = resolve(feat_c, feat_dataset);
                const auto ds = open_dataset(feat_dataset);
                records = dataset_records(ds, split_ids(ds, feat_split, feat_subset), Extractor::conventional, cfg);
            }
            write_feature_file(feat_out, records);
            std::cout << records.size() << " records\n";
        } else if (*export_cmd) {
            const auto cfg = resolve(exp_c, exp_dataset);
            const auto ds = open_dataset(exp_dataset);
            const auto summary = export_windows(ds, split_ids(ds, exp_split, exp_subset), cfg, exp_out);
            for (const auto& e : summary.errors) std::cerr << "warning: " << e << "\n";
            std::cout << summary.windows << " windows exported\n";
        } else if (*train_cmd) {
            auto cfg = resolve(train_c, train_dataset);
            if (train_C) cfg.svm.C = *train_C;
            if (train_seed) cfg.svm.seed = *train_seed;
            validate_config(cfg);
            std::vector<FeatureRecord> train, validation;
            if (!train_features.empty()) {
                train = read_feature_file(train_features);
                if (!train_validation.empty()) validation = read_feature_file(train_validation);
            } else {
                if (train_dataset.empty() || train_split.empty())
                    throw Error("train needs --features or --dataset with --split");
                const auto ds = open_dataset(train_dataset);
                const auto split = load_split(train_split);
                const Extractor e = extractor_from_string(train_extractor);
                train = dataset_records(ds, split.train, e, cfg);
                validation = dataset_records(ds, split.validation, e, cfg);
            }
            if (!train_grid.empty()) {
                if (labelled_only(validation).empty()) throw Error("--grid needs labelled validation records");
                double best_score = -1.0, best_C = train_grid.front();
                for (double C : train_grid) {
                    PipelineConfig trial = cfg;
                    trial.svm.C = C;
                    validate_config(trial);
                    const auto r = train_on_records(train, validation, trial);
                    const double score = (sensitivity(*r.validation).value_or(0.0) +
                                          specificity(*r.validation).value_or(0.0)) / 2.0;
                    std::cout << "C=" << C << " validation (SE+SP)/2=" << score << "\n";
                    if (score > best_score) best_score = score, best_C = C;
                }
                cfg.svm.C = best_C;
                std::cout << "selected C=" << best_C << "\n";
            }
            const auto result = train_on_records(train, validation, cfg);
            save_model(result.model, train_out);
            print_counts("train", result.train);
            if (result.validation) print_counts("validation", *result.validation);
        } else if (*detect_cmd) {
            const auto cfg = resolve(det_c);
            const auto model = load_model(det_model);
            if (!det_overlay.empty()) fs::create_directories(det_overlay);
            const auto run = run_detect(det_images, model, cfg, det_overlay);
            write_file(det_out, join_lines(run.lines));
            std::size_t positives = 0;
            for (const auto& d : run.detections) positives += d.label == Label::positive;
            std::cout << run.detections.size() << " windows, " << positives << " positive, " << run.failed_images
                      << " failed images\n";
            if (run.failed_images == det_images.size()) return 1;
        } else if (*eval_cmd) {
            const auto cfg = resolve(eval_c, eval_dataset);
            const auto model = load_model(eval_model);
            std::vector<FeatureRecord> records;
            if (!eval_features.empty()) {
                records = read_feature_file(eval_features);
            } else {
                if (eval_dataset.empty() || eval_split.empty()) throw Error("eval needs --features or --dataset with --split");
                const auto ds = open_dataset(eval_dataset);
                records = dataset_records(ds, load_split(eval_split).test, model.extractor, cfg);
            }
            const std::vector<ModelReport> rows{{method_name(model.extractor), evaluate(model, records)}};
            std::cout << format_table(rows);
            if (!eval_out.empty()) write_file(eval_out, report_json(rows, cfg).dump(2) + "\n");
        } else if (*compare_cmd) {
            const auto cfg = resolve(cmp_c, cmp_dataset);
            const auto ds = open_dataset(cmp_dataset);
            const auto split = load_split(cmp_split);
            std::vector<ModelReport> rows;
            for (const auto& path : cmp_models) {
                try {
                    const auto model = load_model(path);
                    const auto r = run_compare(ds, split, {model}, cfg);
                    rows.insert(rows.end(), r.begin(), r.end());
                } catch (const Error& e) {
                    std::cerr << "skipping " << path << ": " << e.what() << "\n";
                }
            }
            std::cout << format_table(rows);
            if (!cmp_out.empty()) write_file(cmp_out, report_json(rows, cfg).dump(2) + "\n");
        } else if (*split_cmd) {
            const auto cfg = resolve(split_c);
            const auto ds = open_dataset(split_dataset);
            const int test = split_test.value_or(cfg.eval.test_count);
            if (test < 1) throw Error("--test-count must be >= 1");
            const auto s = make_split(ds.ids, static_cast<std::size_t>(test), split_seed.value_or(cfg.eval.split_seed));
            save_split(s, split_out);
            std::cout << "train " << s.train.size() << ", validation " << s.validation.size() << ", test "
                      << s.test.size() << "\n";
        } else if (*synth_cmd) {
            write_synthetic_dataset(syn_out, syn_count, syn_seed);
            std::cout << syn_count << " synthetic images written to " << syn_out << "\n";
        } else if (*validate_cmd) {
            std::optional<Extractor> expected;
            if (!val_extractor.empty()) expected = extractor_from_string(val_extractor);
            const auto rep = validate_feature_file(val_features, expected);
            if (!rep.ok()) {
                for (const auto& v : rep.violations) std::cout << v << "\n";
                return 1;
            }
            std::cout << "OK, " << rep.records << " records\n";
        } else if (*print_cmd) {
            std::cout << config_to_ini(resolve(pc_c));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
