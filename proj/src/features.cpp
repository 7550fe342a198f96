#include "fundus/features.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace fundus {

using nlohmann::json;

std::string to_string(Label l) {
    switch (l) {
        case Label::positive: return "positive";
        case Label::negative: return "negative";
        case Label::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

Label label_from_string(const std::string& s) {
    if (s == "positive") return Label::positive;
    if (s == "negative") return Label::negative;
    if (s == "unlabeled") return Label::unlabeled;
    throw Error("unknown label: " + s);
}

std::string to_string(Extractor e) {
    switch (e) {
        case Extractor::conventional: return "conventional";
        case Extractor::vgg16: return "vgg16";
        case Extractor::resnet50: return "resnet50";
        case Extractor::alexnet: return "alexnet";
    }
    return "conventional";
}

Extractor extractor_from_string(const std::string& s) {
    if (s == "conventional") return Extractor::conventional;
    if (s == "vgg16") return Extractor::vgg16;
    if (s == "resnet50") return Extractor::resnet50;
    if (s == "alexnet") return Extractor::alexnet;
    throw Error("unknown extractor: " + s);
}

std::size_t feature_dim(Extractor e) {
    switch (e) {
        case Extractor::conventional: return kConventionalDim;
        case Extractor::vgg16: return 4096;
        case Extractor::resnet50: return 2048;
        case Extractor::alexnet: return 4096;
    }
    return 0;
}

const std::array<std::string, kConventionalDim>& conventional_feature_names() {
    static const std::array<std::string, kConventionalDim> names = {
        "cc_area",           "cc_perimeter",        "cc_circularity",     "cc_eccentricity",
        "cc_solidity",       "cc_extent",           "cc_aspect_ratio",    "cc_equiv_diameter",
        "glcm_contrast",     "glcm_correlation",    "glcm_energy",        "glcm_homogeneity",
        "glcm_entropy",      "lab_l_mean",          "lab_a_mean",         "lab_b_mean",
        "lab_l_std",         "lab_a_std",           "lab_b_std",          "lab_l_contrast",
        "lab_a_contrast",    "lab_b_contrast",      "contour_closed",     "corner_count",
        "corner_dist_mean",  "corner_dist_std",     "edge_laplacian_mean", "edge_gradient_mean",
    };
    return names;
}

void validate(const FeatureRecord& r) {
    if (r.window_id.empty()) throw Error("window_id is empty");
    if (r.image_id.empty()) throw Error("image_id is empty");
    if (r.bbox.empty()) throw Error("bbox must satisfy x1 <= x2 and y1 <= y2");
    const std::size_t dim = feature_dim(r.extractor);
    if (r.values.size() != dim)
        throw Error("extractor " + to_string(r.extractor) + " expects " + std::to_string(dim) + " values, got " +
                    std::to_string(r.values.size()));
    if (!r.names.empty() && r.names.size() != r.values.size()) throw Error("names and values differ in length");
    for (std::size_t i = 0; i < r.values.size(); ++i)
        if (!std::isfinite(r.values[i])) throw Error("value " + std::to_string(i) + " is not finite");
}

std::string to_jsonl(const FeatureRecord& r) {
    json j;
    j["window_id"] = r.window_id;
    j["image_id"] = r.image_id;
    j["bbox"] = {r.bbox.left, r.bbox.top, r.bbox.right, r.bbox.bottom};
    j["label"] = to_string(r.label);
    j["extractor"] = to_string(r.extractor);
    j["values"] = r.values;
    return j.dump();
}

namespace {

FeatureRecord record_from_object(const json& j) {
    if (!j.is_object()) throw Error("record is not a JSON object");
    for (const char* key : {"window_id", "image_id", "bbox", "label", "extractor", "values"})
        if (!j.contains(key)) throw Error(std::string("missing field \"") + key + "\"");
    FeatureRecord r;
    r.window_id = j.at("window_id").get<std::string>();
    r.image_id = j.at("image_id").get<std::string>();
    const auto& b = j.at("bbox");
    if (!b.is_array() || b.size() != 4) throw Error("bbox must be an array of four integers");
    for (const auto& v : b)
        if (!v.is_number_integer()) throw Error("bbox must be an array of four integers");
    r.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
    r.label = label_from_string(j.at("label").get<std::string>());
    r.extractor = extractor_from_string(j.at("extractor").get<std::string>());
    const auto& vals = j.at("values");
    if (!vals.is_array()) throw Error("values must be an array");
    r.values.reserve(vals.size());
    for (const auto& v : vals) {
        if (!v.is_number()) throw Error("values must be numbers");
        r.values.push_back(v.get<double>());
    }
    if (j.contains("names")) r.names = j.at("names").get<std::vector<std::string>>();
    if (r.extractor == Extractor::conventional) {
        const auto& canon = conventional_feature_names();
        if (!r.names.empty() && !std::equal(r.names.begin(), r.names.end(), canon.begin(), canon.end()))
            throw Error("conventional feature names do not match the frozen order");
        r.names.assign(canon.begin(), canon.end());
    }
    return r;
}

}  // namespace

FeatureRecord record_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        // Python's json module writes these bare literals for non-finite floats.
        for (const char* lit : {"NaN", "Infinity"})
            if (line.find(lit) != std::string::npos) throw Error(std::string("values contain a non-finite ") + lit);
        throw Error(std::string("malformed JSON: ") + e.what());
    }
    try {
        auto r = record_from_object(j);
        validate(r);
        return r;
    } catch (const json::exception& e) {
        throw Error(std::string("bad field type: ") + e.what());
    }
}

std::vector<FeatureRecord> read_feature_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open feature file " + path);
    std::vector<FeatureRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(record_from_json(line));
        } catch (const Error& e) {
            throw Error(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

void write_feature_file(const std::string& path, const std::vector<FeatureRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write feature file " + path);
    for (const auto& r : records) out << to_jsonl(r) << '\n';
}

ValidationReport validate_feature_file(const std::string& path, std::optional<Extractor> expected) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open feature file " + path);
    ValidationReport rep;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto r = record_from_json(line);
            if (expected && r.extractor != *expected)
                throw Error("extractor " + to_string(r.extractor) + " but expected " + to_string(*expected) +
                            " (" + std::to_string(feature_dim(*expected)) + " values)");
            ++rep.records;
        } catch (const Error& e) {
            rep.violations.push_back("line " + std::to_string(n) + ": " + e.what());
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------

std::array<double, 8> cc_features(const ConnectedComponent& object) {
    if (object.pixels.empty()) throw Error("cc_features: empty object");
    const auto& px = object.pixels;
    const double n = static_cast<double>(px.size());

    int x0 = px[0].x, x1 = px[0].x, y0 = px[0].y, y1 = px[0].y;
    double sx = 0.0, sy = 0.0;
    for (const auto& p : px) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
        sx += p.x;
        sy += p.y;
    }
    const int bw = x1 - x0 + 1;
    const int bh = y1 - y0 + 1;
    BinaryMask local(bw + 2, bh + 2);
    for (const auto& p : px) local.at(p.x - x0 + 1, p.y - y0 + 1) = 1;

    long long crack = 0;
    for (const auto& p : px) {
        const int lx = p.x - x0 + 1, ly = p.y - y0 + 1;
        crack += !local.at(lx - 1, ly) + !local.at(lx + 1, ly) + !local.at(lx, ly - 1) + !local.at(lx, ly + 1);
    }
    const double perimeter = static_cast<double>(crack) * std::numbers::pi / 4.0;
    const double circularity = std::min(1.0, 4.0 * std::numbers::pi * n / (perimeter * perimeter));

    const double cx = sx / n, cy = sy / n;
    double mxx = 0.0, myy = 0.0, mxy = 0.0;
    for (const auto& p : px) {
        mxx += (p.x - cx) * (p.x - cx);
        myy += (p.y - cy) * (p.y - cy);
        mxy += (p.x - cx) * (p.y - cy);
    }
    // 1/12: second moment of a unit pixel about its own centre.
    mxx = mxx / n + 1.0 / 12.0;
    myy = myy / n + 1.0 / 12.0;
    mxy /= n;
    const double half_tr = 0.5 * (mxx + myy);
    const double disc = std::sqrt(0.25 * (mxx - myy) * (mxx - myy) + mxy * mxy);
    const double l1 = half_tr + disc;
    const double l2 = std::max(half_tr - disc, 1e-12);
    const double eccentricity = std::sqrt(std::max(0.0, 1.0 - l2 / l1));
    const double aspect = std::sqrt(l1 / l2);

    // Convex hull over pixel corners (monotone chain).
    std::vector<std::pair<double, double>> pts;
    pts.reserve(px.size() * 4);
    for (const auto& p : px) {
        const int lx = p.x - x0 + 1, ly = p.y - y0 + 1;
        // Interior pixels cannot contribute hull vertices.
        if (local.at(lx - 1, ly) && local.at(lx + 1, ly) && local.at(lx, ly - 1) && local.at(lx, ly + 1)) continue;
        for (double dx : {-0.5, 0.5})
            for (double dy : {-0.5, 0.5}) pts.emplace_back(p.x + dx, p.y + dy);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    auto cross = [](const auto& o, const auto& a, const auto& b) {
        return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
        hull[k++] = pts[i - 1];
    }
    hull.resize(k > 0 ? k - 1 : 0);
    double hull_area = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        hull_area += a.first * b.second - b.first * a.second;
    }
    hull_area = std::abs(hull_area) / 2.0;
    const double solidity = hull_area > 0.0 ? std::min(1.0, n / hull_area) : 1.0;

    return {n,
            perimeter,
            circularity,
            eccentricity,
            solidity,
            n / (static_cast<double>(bw) * bh),
            aspect,
            std::sqrt(4.0 * n / std::numbers::pi)};
}

std::vector<double> glcm(const Raster& window, int levels) {
    if (levels < 2 || levels > 256) throw Error("glcm levels must be in [2,256]");
    const int w = window.width();
    const int h = window.height();
    std::vector<double> avg(static_cast<std::size_t>(levels) * levels, 0.0);
    std::vector<double> counts(avg.size());
    int used = 0;
    constexpr std::array<std::array<int, 2>, 4> offsets{{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};  // (dy, dx)
    for (const auto& [dy, dx] : offsets) {
        std::fill(counts.begin(), counts.end(), 0.0);
        double pairs = 0.0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int nx = x + dx, ny = y + dy;
                if (!window.in_bounds(nx, ny)) continue;
                const int a = window.at(x, y) * levels / 256;
                const int b = window.at(nx, ny) * levels / 256;
                counts[static_cast<std::size_t>(a) * levels + b] += 1.0;
                pairs += 1.0;
            }
        }
        if (pairs == 0.0) continue;
        ++used;
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += counts[i] / pairs;
    }
    if (used == 0) throw Error("glcm: window too small for any offset");
    for (auto& v : avg) v /= used;
    return avg;
}

std::array<double, 5> glcm_texture_features(const Raster& window) {
    if (window.width() < 2 || window.height() < 2) throw Error("glcm texture needs a window of at least 2x2");
    constexpr int L = 16;
    const auto p = glcm(window, L);
    double mi = 0.0, mj = 0.0;
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) {
            mi += i * p[i * L + j];
            mj += j * p[i * L + j];
        }
    double vi = 0.0, vj = 0.0, cov = 0.0, contrast = 0.0, energy = 0.0, homogeneity = 0.0, entropy = 0.0;
    for (int i = 0; i < L; ++i) {
        for (int j = 0; j < L; ++j) {
            const double q = p[i * L + j];
            vi += (i - mi) * (i - mi) * q;
            vj += (j - mj) * (j - mj) * q;
            cov += (i - mi) * (j - mj) * q;
            contrast += double(i - j) * (i - j) * q;
            energy += q * q;
            homogeneity += q / (1.0 + std::abs(i - j));
            if (q > 0.0) entropy -= q * std::log(q);
        }
    }
    const double denom = std::sqrt(vi * vj);
    const double correlation = denom > 1e-12 ? cov / denom : 0.0;
    return {contrast, correlation, energy, homogeneity, entropy};
}

Lab srgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    auto linear = [](std::uint8_t c) {
        const double v = c / 255.0;
        return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
    };
    const double r = linear(r8), g = linear(g8), b = linear(b8);
    // sRGB primaries, D65 white.
    const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    auto f = [](double t) {
        constexpr double d = 6.0 / 29.0;
        return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
    };
    const double fx = f(x), fy = f(y), fz = f(z);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 9> color_features(const RgbRaster& rgb, const BinaryMask& object) {
    if (rgb.width() != object.width() || rgb.height() != object.height())
        throw Error("color features: window and object mask differ in size");
    std::array<double, 3> in_sum{}, in_sq{}, out_sum{};
    double n_in = 0.0, n_out = 0.0;
    for (std::size_t i = 0; i < object.size(); ++i) {
        const Lab c = srgb_to_lab(rgb.r.data()[i], rgb.g.data()[i], rgb.b.data()[i]);
        const std::array<double, 3> v{c.l, c.a, c.b};
        if (object.data()[i]) {
            n_in += 1.0;
            for (int k = 0; k < 3; ++k) {
                in_sum[k] += v[k];
                in_sq[k] += v[k] * v[k];
            }
        } else {
            n_out += 1.0;
            for (int k = 0; k < 3; ++k) out_sum[k] += v[k];
        }
    }
    if (n_in == 0.0) throw Error("color features: object is empty");
    std::array<double, 9> f{};
    for (int k = 0; k < 3; ++k) {
        const double mean = in_sum[k] / n_in;
        f[k] = mean;
        f[3 + k] = std::sqrt(std::max(0.0, in_sq[k] / n_in - mean * mean));
        f[6 + k] = n_out > 0.0 ? mean - out_sum[k] / n_out : 0.0;
    }
    return f;
}

std::vector<Point> harris_corners(const Raster& window, const HarrisConfig& cfg) {
    const int w = window.width();
    const int h = window.height();
    const auto g = sobel(window);
    RealRaster xx(w, h), yy(w, h), xy(w, h);
    for (std::size_t i = 0; i < window.size(); ++i) {
        const double gx = g.gx.data()[i] / 8.0, gy = g.gy.data()[i] / 8.0;
        xx.data()[i] = gx * gx;
        yy.data()[i] = gy * gy;
        xy.data()[i] = gx * gy;
    }
    // Gaussian window, sigma 1, 5x5.
    std::array<double, 5> taps{};
    double tsum = 0.0;
    for (int i = -2; i <= 2; ++i) tsum += taps[i + 2] = std::exp(-0.5 * i * i);
    for (auto& t : taps) t /= tsum;
    RealRaster response(w, h);
    double max_r = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double a = 0.0, b = 0.0, c = 0.0;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    const double wt = taps[dx + 2] * taps[dy + 2];
                    a += wt * xx.clamped(x + dx, y + dy);
                    b += wt * yy.clamped(x + dx, y + dy);
                    c += wt * xy.clamped(x + dx, y + dy);
                }
            const double r = (a * b - c * c) - cfg.k * (a + b) * (a + b);
            response.at(x, y) = r;
            max_r = std::max(max_r, r);
        }
    }
    std::vector<Point> corners;
    if (max_r <= 0.0) return corners;
    const double cut = cfg.relative_threshold * max_r;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double r = response.at(x, y);
            if (r <= cut) continue;
            bool peak = true;
            for (int dy = -1; dy <= 1 && peak; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dx && !dy) continue;
                    if (!response.in_bounds(x + dx, y + dy)) continue;
                    const double n = response.at(x + dx, y + dy);
                    // Plateaus keep their first pixel in raster order.
                    const bool earlier = dy < 0 || (dy == 0 && dx < 0);
                    if (n > r || (earlier && n == r)) {
                        peak = false;
                        break;
                    }
                }
            if (peak) corners.push_back({x, y});
        }
    }
    return corners;
}

std::array<double, 6> handcrafted_features(const Raster& window, const BinaryMask& object) {
    if (!window.same_shape(object)) throw Error("handcrafted features: window and object mask differ in size");
    const std::size_t area = count(object);
    if (area == 0) throw Error("handcrafted features: object is empty");

    const double closed = any_flag(border_flags(object)) ? 0.0 : 1.0;

    double cx = 0.0, cy = 0.0;
    for (int y = 0; y < object.height(); ++y)
        for (int x = 0; x < object.width(); ++x)
            if (object.at(x, y)) {
                cx += x;
                cy += y;
            }
    cx /= static_cast<double>(area);
    cy /= static_cast<double>(area);

    const auto corners = harris_corners(window);
    double dmean = 0.0, dstd = 0.0;
    if (!corners.empty()) {
        double s = 0.0, sq = 0.0;
        for (const auto& p : corners) {
            const double d = std::hypot(p.x - cx, p.y - cy);
            s += d;
            sq += d * d;
        }
        const double n = static_cast<double>(corners.size());
        dmean = s / n;
        dstd = std::sqrt(std::max(0.0, sq / n - dmean * dmean));
    }

    const auto se = StructuringElement::square(1);
    const BinaryMask band = mask_and_not(dilate(object, se), erode(object, se));
    const auto grad = sobel(window);
    double lap_sum = 0.0, grad_sum = 0.0, n_band = 0.0;
    for (int y = 0; y < window.height(); ++y) {
        for (int x = 0; x < window.width(); ++x) {
            if (!band.at(x, y)) continue;
            const double lap = double(window.clamped(x - 1, y)) + window.clamped(x + 1, y) +
                               window.clamped(x, y - 1) + window.clamped(x, y + 1) - 4.0 * window.at(x, y);
            lap_sum += std::abs(lap);
            grad_sum += grad.magnitude.at(x, y);
            n_band += 1.0;
        }
    }
    return {closed,
            static_cast<double>(corners.size()),
            dmean,
            dstd,
            n_band > 0.0 ? lap_sum / n_band : 0.0,
            n_band > 0.0 ? grad_sum / n_band : 0.0};
}

std::string window_id(const std::string& image_id, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_w%03d", index);
    return image_id + buf;
}

FeatureRecord extract_conventional(const ImageContext& ctx, const Segment& seg, const std::string& wid) {
    if (!ctx.rgb || !ctx.enhanced) throw Error("image context is incomplete");
    if (!ctx.rgb->g.same_shape(*ctx.enhanced)) throw Error("image context rasters differ in size");
    auto window = clip_bbox(seg.window, ctx.enhanced->width(), ctx.enhanced->height());
    if (!window) throw Error("segment window lies outside the image");
    const Raster gray = crop(*ctx.enhanced, *window);
    const RgbRaster rgb = crop(*ctx.rgb, *window);
    const BinaryMask obj = component_mask(seg.object, window->width(), window->height(), window->left, window->top);

    FeatureRecord r;
    r.window_id = wid;
    r.image_id = ctx.image_id;
    r.bbox = *window;
    r.extractor = Extractor::conventional;
    const auto cc = cc_features(seg.object);
    const auto tex = glcm_texture_features(gray);
    const auto col = color_features(rgb, obj);
    const auto hand = handcrafted_features(gray, obj);
    r.values.insert(r.values.end(), cc.begin(), cc.end());
    r.values.insert(r.values.end(), tex.begin(), tex.end());
    r.values.insert(r.values.end(), col.begin(), col.end());
    r.values.insert(r.values.end(), hand.begin(), hand.end());
    const auto& names = conventional_feature_names();
    r.names.assign(names.begin(), names.end());
    validate(r);
    return r;
}

ScalerStats fit_scaler(std::span<const FeatureRecord> records) {
    if (records.size() < 2) throw Error("fit_scaler needs at least two records");
    const std::size_t dim = records.front().values.size();
    ScalerStats s{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
    for (const auto& r : records) {
        if (r.values.size() != dim) throw Error("fit_scaler: records differ in dimension");
        for (std::size_t i = 0; i < dim; ++i) s.mean[i] += r.values[i];
    }
    const double n = static_cast<double>(records.size());
    for (auto& m : s.mean) m /= n;
    for (const auto& r : records)
        for (std::size_t i = 0; i < dim; ++i) s.stddev[i] += (r.values[i] - s.mean[i]) * (r.values[i] - s.mean[i]);
    for (auto& v : s.stddev) v = std::sqrt(v / n);
    return s;
}

FeatureRecord apply_scaler(const ScalerStats& stats, const FeatureRecord& record) {
    if (record.scaled) throw Error("record is already scaled");
    if (record.values.size() != stats.mean.size() || stats.mean.size() != stats.stddev.size())
        throw Error("scaler dimension mismatch");
    FeatureRecord out = record;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        if (stats.stddev[i] > 0.0) out.values[i] = (out.values[i] - stats.mean[i]) / stats.stddev[i];
    out.scaled = true;
    return out;
}

}  // namespace fundus
