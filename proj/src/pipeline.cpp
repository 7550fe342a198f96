#include "fundus/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fundus/eval.hpp"

namespace fundus {

namespace fs = std::filesystem;

namespace {

Raster box_down(const Raster& img, int f) {
    const int w = img.width() / f;
    const int h = img.height() / f;
    Raster out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int sum = 0;
            for (int dy = 0; dy < f; ++dy)
                for (int dx = 0; dx < f; ++dx) sum += img.at(x * f + dx, y * f + dy);
            out.at(x, y) = round_to_u8(static_cast<double>(sum) / (f * f));
        }
    return out;
}

void check_factor(int f, int w, int h) {
    if (f < 1) throw Error("downscale factor must be >= 1");
    if (w / f < 1 || h / f < 1) throw Error("downscale factor leaves an empty image");
}

void paint(RgbRaster& img, int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (!img.g.in_bounds(x, y)) return;
    img.r.at(x, y) = r;
    img.g.at(x, y) = g;
    img.b.at(x, y) = b;
}

}  // namespace

RgbRaster downscale(const RgbRaster& img, int f) {
    check_factor(f, img.width(), img.height());
    if (f == 1) return img;
    return RgbRaster(box_down(img.r, f), box_down(img.g, f), box_down(img.b, f));
}

BinaryMask downscale(const BinaryMask& mask, int f) {
    check_factor(f, mask.width(), mask.height());
    if (f == 1) return mask;
    BinaryMask out(mask.width() / f, mask.height() / f);
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) {
            int on = 0;
            for (int dy = 0; dy < f; ++dy)
                for (int dx = 0; dx < f; ++dx) on += mask.at(x * f + dx, y * f + dy);
            out.at(x, y) = 2 * on >= f * f;
        }
    return out;
}

Raster seed_plane(const CalibrationProducts& c) {
    const BinaryMask inside = mask_and_not(c.retinal_mask, c.retinal_border);
    std::vector<int> counts(256, 0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < inside.size(); ++i)
        if (inside.data()[i]) ++counts[c.calibrated.data()[i]], ++n;
    if (n == 0) throw Error("retinal area vanishes after removing the border band");
    int median = 0;
    for (std::size_t acc = 0; median < 255; ++median) {
        acc += static_cast<std::size_t>(counts[static_cast<std::size_t>(median)]);
        if (2 * acc >= n) break;
    }
    Raster out = c.calibrated;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!inside.data()[i]) out.data()[i] = static_cast<std::uint8_t>(median);
    return out;
}

ImageAnalysis analyze_image(const RgbRaster& rgb, const PipelineConfig& cfg) {
    ImageAnalysis a;
    a.rgb = downscale(rgb, cfg.downscale);
    a.enhanced = preprocess(a.rgb, cfg.preprocess);
    a.calibration = calibrate_image(a.rgb, a.enhanced, cfg.calibrate);
    a.seeds = seed_maps(seed_plane(a.calibration), cfg.seeds, &a.calibration.retinal_mask);
    a.segmentation = segment_all(a.calibration.calibrated, a.seeds.seeds, a.calibration.search_space, cfg.swat);
    return a;
}

std::vector<FeatureRecord> window_records(const std::string& image_id, const ImageAnalysis& a,
                                          const BinaryMask* gt, double min_overlap) {
    if (gt && !gt->same_shape(a.enhanced))
        throw Error("ground truth for " + image_id + " is " + std::to_string(gt->width()) + "x" +
                    std::to_string(gt->height()) + ", image is " + std::to_string(a.enhanced.width()) + "x" +
                    std::to_string(a.enhanced.height()));
    const ImageContext ctx{image_id, &a.rgb, &a.enhanced};
    std::vector<FeatureRecord> out;
    out.reserve(a.segmentation.segments.size());
    for (const auto& seg : a.segmentation.segments) {
        auto r = extract_conventional(ctx, seg, window_id(image_id, seg.seed_id));
        if (gt) r.label = annotate(seg, *gt, min_overlap);
        out.push_back(std::move(r));
    }
    return out;
}

RgbRaster overlay(const RgbRaster& img, const std::vector<Segment>& segments, const std::vector<Label>& labels) {
    RgbRaster out = img;
    // Positives are drawn last so overlapping negatives never hide them.
    for (const bool positive_pass : {false, true}) {
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const Label l = i < labels.size() ? labels[i] : Label::unlabeled;
            if ((l == Label::positive) != positive_pass) continue;
            std::uint8_t r = 0, g = 255, b = 255;
            if (l == Label::positive) r = 255, g = 0, b = 0;
            if (l == Label::negative) r = 255, g = 255, b = 0;
            const auto& obj = segments[i].object;
            const BBox& bb = obj.bbox;
            const BinaryMask m = component_mask(obj, bb.width(), bb.height(), bb.left, bb.top);
            for (int y = 0; y < m.height(); ++y)
                for (int x = 0; x < m.width(); ++x) {
                    if (!m.at(x, y)) continue;
                    const bool edge = x == 0 || y == 0 || x == m.width() - 1 || y == m.height() - 1 ||
                                      !m.at(x - 1, y) || !m.at(x + 1, y) || !m.at(x, y - 1) || !m.at(x, y + 1);
                    if (edge) paint(out, x + bb.left, y + bb.top, r, g, b);
                }
        }
    }
    return out;
}

RgbRaster overlay_seeds(const RgbRaster& img, const std::vector<SeedWindow>& seeds) {
    RgbRaster out = img;
    for (const auto& s : seeds) {
        for (int x = s.bbox.left; x <= s.bbox.right; ++x) {
            paint(out, x, s.bbox.top, 0, 255, 0);
            paint(out, x, s.bbox.bottom, 0, 255, 0);
        }
        for (int y = s.bbox.top; y <= s.bbox.bottom; ++y) {
            paint(out, s.bbox.left, y, 0, 255, 0);
            paint(out, s.bbox.right, y, 0, 255, 0);
        }
    }
    return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << bytes;
    if (!out) throw Error("write failed: " + path);
}

StageCache::StageCache(std::string dir) : dir_(std::move(dir)) {}

std::optional<std::string> StageCache::get(const std::string& key) const {
    if (!enabled()) return std::nullopt;
    const fs::path p = fs::path(dir_) / key;
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) return std::nullopt;
    try {
        return read_file(p.string());
    } catch (const Error&) {
        return std::nullopt;
    }
}

void StageCache::put(const std::string& key, const std::string& value) const {
    if (!enabled()) return;
    const fs::path p = fs::path(dir_) / key;
    // Write then rename so concurrent readers never see a partial blob.
    const fs::path tmp = p.string() + ".tmp" + hex64(fnv1a(value) ^ std::hash<std::thread::id>{}(std::this_thread::get_id()));
    write_file(tmp.string(), value);
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) fs::remove(tmp, ec);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    const auto run = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) run(i);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace fundus
