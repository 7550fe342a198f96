#include "fundus/workflow.hpp"

#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "fundus/config.hpp"
#include "fundus/png_io.hpp"
#include "fundus/synthetic.hpp"

namespace fundus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCacheVersion = "records-v1";

std::optional<std::string> existing(const fs::path& p) {
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) return p.string();
    return std::nullopt;
}

json bbox_json(const BBox& b) { return json::array({b.left, b.top, b.right, b.bottom}); }

BBox bbox_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw Error("bbox must be an array of four integers");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

std::vector<FeatureRecord> parse_records(const std::string& text) {
    std::vector<FeatureRecord> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(record_from_json(line));
    return out;
}

std::string serialise(const std::vector<FeatureRecord>& records) {
    std::string s;
    for (const auto& r : records) s += to_jsonl(r) + "\n";
    return s;
}

std::string records_cache_key(const Dataset& ds, const std::string& id, const PipelineConfig& cfg) {
    std::string text = kCacheVersion;
    text += "|img=" + hex64(fnv1a(read_file(ds.image_path(id))));
    if (auto m = ds.mask_path(id))
        text += "|mask=" + hex64(fnv1a(read_file(*m)));
    else if (auto c = ds.confidence_path(id))
        text += "|conf=" + hex64(fnv1a(read_file(*c)));
    text += "|cfg=" + hex64(config_hash(cfg, {"preprocess", "seeds", "calibrate", "swat"}));
    text += "|" + get_config_value(cfg, "eval.min_overlap") + "|" + get_config_value(cfg, "eval.gt_consensus");
    text += "|" + get_config_value(cfg, "run.downscale") + "|" + id;
    return "records-" + hex64(fnv1a(text)) + ".jsonl";
}

}  // namespace

std::string Dataset::image_path(const std::string& id) const { return (fs::path(root) / "images" / (id + ".png")).string(); }

std::string Dataset::feature_path(Extractor e) const {
    return (fs::path(root) / "features" / (to_string(e) + ".jsonl")).string();
}

std::optional<std::string> Dataset::mask_path(const std::string& id) const {
    return existing(fs::path(root) / "masks" / (id + ".png"));
}

std::optional<std::string> Dataset::confidence_path(const std::string& id) const {
    return existing(fs::path(root) / "confidence" / (id + ".png"));
}

Dataset open_dataset(const std::string& root) {
    const fs::path dir = fs::path(root) / "images";
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error("dataset " + root + " has no images/ directory");
    Dataset ds;
    ds.root = root;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png") ds.ids.push_back(entry.path().stem().string());
    std::sort(ds.ids.begin(), ds.ids.end());
    if (ds.ids.empty()) throw Error("dataset " + root + " has no PNG images");
    return ds;
}

std::optional<BinaryMask> load_ground_truth(const Dataset& ds, const std::string& id, const PipelineConfig& cfg) {
    if (auto m = ds.mask_path(id)) return downscale(read_png_mask(*m), cfg.downscale);
    if (auto c = ds.confidence_path(id))
        return downscale(ground_truth_from_confidence(read_png_gray(*c), cfg.eval.gt_consensus), cfg.downscale);
    return std::nullopt;
}

std::string image_id_from_path(const std::string& path) { return fs::path(path).stem().string(); }

std::string seeds_to_json(const std::vector<SeedWindow>& seeds) {
    json j = json::array();
    for (const auto& s : seeds) j.push_back({{"bbox", bbox_json(s.bbox)}, {"component", s.component}});
    return j.dump();
}

std::vector<SeedWindow> seeds_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (!j.is_array()) throw Error("seed file must hold a JSON array");
        std::vector<SeedWindow> out;
        for (const auto& e : j) out.push_back({bbox_from(e.at("bbox")), e.at("component").get<int>()});
        return out;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed seed file: ") + e.what());
    }
}

std::string segment_to_jsonl(const Segment& seg) {
    json j{{"seed_id", seg.seed_id},
           {"status", to_string(seg.status)},
           {"bbox", bbox_json(seg.window)},
           {"object_rle", encode_rle(seg.object, seg.window)},
           {"iterations", seg.iterations}};
    return j.dump();
}

Segment segment_from_jsonl(const std::string& line) {
    try {
        const json j = json::parse(line);
        Segment s;
        s.seed_id = j.at("seed_id").get<int>();
        s.status = segment_status_from_string(j.at("status").get<std::string>());
        s.window = bbox_from(j.at("bbox"));
        s.object = decode_rle(j.at("object_rle").get<std::vector<int>>(), s.window);
        s.iterations = j.at("iterations").get<int>();
        return s;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed segment record: ") + e.what());
    }
}

std::vector<ImageRecords> conventional_records(const Dataset& ds, const std::vector<std::string>& ids,
                                               const PipelineConfig& cfg) {
    const StageCache cache(cfg.cache_dir);
    std::vector<ImageRecords> out(ids.size());
    parallel_for(ids.size(), cfg.workers, [&](std::size_t i) {
        const std::string& id = ids[i];
        out[i].image_id = id;
        try {
            const std::string key = records_cache_key(ds, id, cfg);
            if (auto hit = cache.get(key)) {
                out[i].records = parse_records(*hit);
                return;
            }
            const RgbRaster rgb = read_png_rgb(ds.image_path(id));
            const ImageAnalysis a = analyze_image(rgb, cfg);
            const auto gt = load_ground_truth(ds, id, cfg);
            out[i].records = window_records(id, a, gt ? &*gt : nullptr, cfg.eval.min_overlap);
            cache.put(key, serialise(out[i].records));
        } catch (const Error& e) {
            out[i].records.clear();
            out[i].error = e.what();
        }
    });
    return out;
}

std::vector<FeatureRecord> dataset_records(const Dataset& ds, const std::vector<std::string>& ids, Extractor e,
                                           const PipelineConfig& cfg) {
    std::vector<FeatureRecord> out;
    if (e == Extractor::conventional) {
        for (auto& img : conventional_records(ds, ids, cfg)) {
            if (!img.error.empty()) {
                std::cerr << "warning: " << img.image_id << ": " << img.error << "\n";
                continue;
            }
            for (auto& r : img.records) out.push_back(std::move(r));
        }
        return out;
    }
    const std::string path = ds.feature_path(e);
    if (!existing(path))
        throw Error("no " + to_string(e) + " features: expected " + path +
                    " (extract them from the export-windows manifest with the deep-feature bridge)");
    const std::set<std::string> wanted(ids.begin(), ids.end());
    for (auto& r : read_feature_file(path)) {
        if (r.extractor != e)
            throw Error(path + ": record " + r.window_id + " has extractor " + to_string(r.extractor));
        if (wanted.count(r.image_id)) out.push_back(std::move(r));
    }
    return out;
}

std::vector<FeatureRecord> labelled_only(std::vector<FeatureRecord> records) {
    std::erase_if(records, [](const FeatureRecord& r) { return r.label == Label::unlabeled; });
    return records;
}

ConfusionCounts evaluate(const SvmModel& model, const std::vector<FeatureRecord>& records) {
    std::vector<Label> pred, truth;
    for (const auto& r : records) {
        if (r.label == Label::unlabeled) continue;
        pred.push_back(predict(model, r).label);
        truth.push_back(r.label);
    }
    return confusion(pred, truth);
}

TrainResult train_on_records(const std::vector<FeatureRecord>& train, const std::vector<FeatureRecord>& validation,
                             const PipelineConfig& cfg) {
    const auto labelled = labelled_only(train);
    if (labelled.empty()) throw Error("no labelled training windows");
    TrainResult r;
    r.model = train_scaled(labelled, cfg.svm);
    r.train = evaluate(r.model, labelled);
    const auto val = labelled_only(validation);
    if (!val.empty()) r.validation = evaluate(r.model, val);
    return r;
}

TrainResult run_train(const Dataset& ds, const SplitManifest& split, Extractor e, const PipelineConfig& cfg) {
    return train_on_records(dataset_records(ds, split.train, e, cfg), dataset_records(ds, split.validation, e, cfg),
                            cfg);
}

std::vector<ModelReport> run_compare(const Dataset& ds, const SplitManifest& split,
                                     const std::vector<SvmModel>& models, const PipelineConfig& cfg) {
    std::vector<ModelReport> rows;
    for (const auto& m : models)
        rows.push_back({method_name(m.extractor), evaluate(m, dataset_records(ds, split.test, m.extractor, cfg))});
    return rows;
}

json report_json(const std::vector<ModelReport>& rows, const PipelineConfig& cfg) {
    json per = json::object();
    for (const auto& r : rows) {
        const auto se = sensitivity(r.counts);
        const auto sp = specificity(r.counts);
        per[r.name] = {{"TP", r.counts.tp},
                       {"FP", r.counts.fp},
                       {"TN", r.counts.tn},
                       {"FN", r.counts.fn},
                       {"SE", se ? json(*se) : json(nullptr)},
                       {"SP", sp ? json(*sp) : json(nullptr)}};
    }
    return {{"per_model", per}, {"config", config_to_json(cfg)}};
}

DetectionRun run_detect(const std::vector<std::string>& paths, const SvmModel& model, const PipelineConfig& cfg,
                        const std::string& overlay_dir) {
    if (model.extractor != Extractor::conventional)
        throw Error("detect runs the conventional extractor; model was trained on " + to_string(model.extractor));
    struct PerImage {
        std::vector<Detection> detections;
        std::string error;
    };
    std::vector<PerImage> results(paths.size());
    parallel_for(paths.size(), cfg.workers, [&](std::size_t i) {
        const std::string id = image_id_from_path(paths[i]);
        try {
            const RgbRaster rgb = read_png_rgb(paths[i]);
            const ImageAnalysis a = analyze_image(rgb, cfg);
            const auto records = window_records(id, a, nullptr, cfg.eval.min_overlap);
            std::vector<Label> labels;
            for (const auto& r : records) {
                const Prediction p = predict(model, r);
                results[i].detections.push_back({id, r.window_id, r.bbox, p.label, p.margin});
                labels.push_back(p.label);
            }
            if (!overlay_dir.empty())
                write_png(fs::path(overlay_dir) / (id + ".png"), overlay(a.rgb, a.segmentation.segments, labels));
        } catch (const Error& e) {
            results[i].detections.clear();
            results[i].error = e.what();
        }
    });

    DetectionRun run;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (!results[i].error.empty()) {
            ++run.failed_images;
            run.lines.push_back(json{{"image_id", image_id_from_path(paths[i])}, {"error", results[i].error}}.dump());
            continue;
        }
        for (const auto& d : results[i].detections) {
            run.lines.push_back(json{{"image_id", d.image_id},
                                     {"window_id", d.window_id},
                                     {"bbox", bbox_json(d.bbox)},
                                     {"label", to_string(d.label)},
                                     {"margin", d.margin}}
                                    .dump());
            run.detections.push_back(d);
        }
    }
    return run;
}

ExportSummary export_windows(const Dataset& ds, const std::vector<std::string>& ids, const PipelineConfig& cfg,
                             const std::string& out_dir) {
    const fs::path crops = fs::path(out_dir) / "crops";
    fs::create_directories(crops);
    std::vector<std::vector<std::string>> lines(ids.size());
    std::vector<std::string> errors(ids.size());
    parallel_for(ids.size(), cfg.workers, [&](std::size_t i) {
        const std::string& id = ids[i];
        try {
            const RgbRaster rgb = read_png_rgb(ds.image_path(id));
            const ImageAnalysis a = analyze_image(rgb, cfg);
            const auto gt = load_ground_truth(ds, id, cfg);
            for (const auto& seg : a.segmentation.segments) {
                const auto window = clip_bbox(seg.window, a.rgb.width(), a.rgb.height());
                if (!window) continue;
                const std::string wid = window_id(id, seg.seed_id);
                const Label label = gt ? annotate(seg, *gt, cfg.eval.min_overlap) : Label::unlabeled;
                write_png(crops / (wid + ".png"), crop(a.rgb, *window));
                lines[i].push_back(json{{"window_id", wid},
                                        {"image_id", id},
                                        {"bbox", bbox_json(*window)},
                                        {"label", to_string(label)}}
                                       .dump());
            }
        } catch (const Error& e) {
            lines[i].clear();
            errors[i] = id + ": " + e.what();
        }
    });
    ExportSummary summary;
    std::string manifest;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!errors[i].empty()) summary.errors.push_back(errors[i]);
        for (const auto& l : lines[i]) {
            manifest += l + "\n";
            ++summary.windows;
        }
    }
    write_file((fs::path(out_dir) / "manifest.jsonl").string(), manifest);
    return summary;
}

void write_synthetic_dataset(const std::string& root, int count, std::uint64_t first_seed) {
    if (count < 1) throw Error("synthetic dataset needs at least one image");
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "masks");
    for (int i = 0; i < count; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "img%03d", i);
        const auto img = make_synthetic(first_seed + static_cast<std::uint64_t>(i));
        write_png(fs::path(root) / "images" / (std::string(id) + ".png"), img.rgb);
        write_png(fs::path(root) / "masks" / (std::string(id) + ".png"), img.ground_truth);
    }
}

}  // namespace fundus
