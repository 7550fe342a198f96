#include "fundus/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fundus {

using nlohmann::json;

Label annotate(const ConnectedComponent& object, const BinaryMask& gt, double min_overlap) {
    if (object.pixels.empty()) throw Error("annotate: empty object");
    std::size_t hits = 0;
    for (const auto& p : object.pixels) {
        if (!gt.in_bounds(p.x, p.y)) throw Error("annotate: object lies outside the ground-truth mask");
        hits += gt.at(p.x, p.y) ? 1 : 0;
    }
    // Integer form of hits / area >= min_overlap for the default 0.5.
    const double ratio = static_cast<double>(hits) / static_cast<double>(object.pixels.size());
    const bool pos = min_overlap == 0.5 ? 2 * hits >= object.pixels.size() : ratio >= min_overlap;
    return pos ? Label::positive : Label::negative;
}

Label annotate(const Segment& seg, const BinaryMask& gt, double min_overlap) {
    return annotate(seg.object, gt, min_overlap);
}

BinaryMask ground_truth_from_confidence(const Raster& confidence, double min_consensus) {
    BinaryMask out(confidence.width(), confidence.height());
    const double cut = min_consensus * 255.0;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = confidence.data()[i] + 1e-9 >= cut;
    return out;
}

ConfusionCounts confusion(const std::vector<Label>& predictions, const std::vector<Label>& labels) {
    if (predictions.size() != labels.size())
        throw Error("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(labels.size()) + " labels");
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == Label::unlabeled || predictions[i] == Label::unlabeled)
            throw Error("confusion: unlabeled entry at index " + std::to_string(i));
        const bool truth = labels[i] == Label::positive;
        const bool pred = predictions[i] == Label::positive;
        if (truth && pred)
            ++c.tp;
        else if (!truth && pred)
            ++c.fp;
        else if (!truth)
            ++c.tn;
        else
            ++c.fn;
    }
    return c;
}

std::optional<double> sensitivity(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

std::optional<double> specificity(const ConfusionCounts& c) {
    if (c.tn + c.fp == 0) return std::nullopt;
    return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

SplitManifest make_split(std::vector<std::string> ids, std::size_t test_count, std::uint64_t seed) {
    std::set<std::string> unique(ids.begin(), ids.end());
    if (unique.size() != ids.size()) throw Error("make_split: duplicate image ids");
    if (ids.size() <= test_count)
        throw Error("make_split: need more than " + std::to_string(test_count) + " images, got " +
                    std::to_string(ids.size()));
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    for (std::size_t i = ids.size() - 1; i > 0; --i) std::swap(ids[i], ids[rng() % (i + 1)]);

    SplitManifest s;
    s.seed = seed;
    const std::size_t rest = ids.size() - test_count;
    const auto val = static_cast<std::size_t>(std::floor(0.15 * static_cast<double>(rest) + 0.5));
    s.test.assign(ids.begin(), ids.begin() + static_cast<long>(test_count));
    s.validation.assign(ids.begin() + static_cast<long>(test_count),
                        ids.begin() + static_cast<long>(test_count + val));
    s.train.assign(ids.begin() + static_cast<long>(test_count + val), ids.end());
    return s;
}

std::string split_to_json(const SplitManifest& s) {
    json j{{"seed", s.seed}, {"train", s.train}, {"validation", s.validation}, {"test", s.test}};
    return j.dump(2);
}

SplitManifest split_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        SplitManifest s;
        s.seed = j.value("seed", std::uint64_t{0});
        s.train = j.at("train").get<std::vector<std::string>>();
        s.validation = j.at("validation").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
        std::set<std::string> seen;
        for (const auto* part : {&s.train, &s.validation, &s.test})
            for (const auto& id : *part)
                if (!seen.insert(id).second) throw Error("split manifest lists " + id + " twice");
        return s;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed split manifest: ") + e.what());
    }
}

void save_split(const SplitManifest& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write split manifest " + path);
    out << split_to_json(s) << '\n';
}

SplitManifest load_split(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open split manifest " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return split_from_json(ss.str());
}

std::string method_name(Extractor e) {
    switch (e) {
        case Extractor::conventional: return "SVM";
        case Extractor::vgg16: return "VGG16";
        case Extractor::resnet50: return "ResNet50";
        case Extractor::alexnet: return "AlexNet";
    }
    return "?";
}

std::string format_percent(std::optional<double> v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
    return buf;
}

std::string format_table(const std::vector<ModelReport>& rows) {
    std::ostringstream out;
    char line[128];
    std::snprintf(line, sizeof line, "%-10s %8s %8s\n", "Methods", "SE (%)", "SP (%)");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-10s %8s %8s\n", r.name.c_str(),
                      format_percent(sensitivity(r.counts)).c_str(), format_percent(specificity(r.counts)).c_str());
        out << line;
    }
    return out.str();
}

}  // namespace fundus
