#include "fundus/preprocess.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace fundus {

void PreprocessConfig::validate() const {
    if (clahe_tiles < 1) throw Error("clahe_tiles must be >= 1");
    if (!(clahe_clip > 0.0 && clahe_clip <= 1.0)) throw Error("clahe_clip must be in (0,1]");
    if (!(gamma_min > 0.0 && gamma_min <= gamma_max)) throw Error("gamma bounds must satisfy 0 < min <= max");
    if (!(sharpen_strength >= 0.0 && sharpen_strength <= 2.0)) throw Error("sharpen_strength must be in [0,2]");
    if (!(sharpen_threshold > 0.0 && sharpen_threshold <= 255.0))
        throw Error("sharpen_threshold must be in (0,255]");
}

namespace {

struct AxisWeights {
    std::vector<int> lo;
    std::vector<int> hi;
    std::vector<double> w;  // weight of `hi`
};

// Tile i covers [floor(i*len/n), floor((i+1)*len/n)).
AxisWeights axis_weights(int len, int n) {
    std::vector<double> centre(n);
    for (int i = 0; i < n; ++i) {
        const int start = static_cast<int>(static_cast<long long>(i) * len / n);
        const int end = static_cast<int>(static_cast<long long>(i + 1) * len / n);
        centre[i] = 0.5 * (start + end - 1);
    }
    AxisWeights a{std::vector<int>(len), std::vector<int>(len), std::vector<double>(len)};
    int i = 0;
    for (int p = 0; p < len; ++p) {
        if (p <= centre.front()) {
            a.lo[p] = a.hi[p] = 0;
            a.w[p] = 0.0;
        } else if (p >= centre.back()) {
            a.lo[p] = a.hi[p] = n - 1;
            a.w[p] = 0.0;
        } else {
            while (centre[i + 1] <= p) ++i;
            a.lo[p] = i;
            a.hi[p] = i + 1;
            a.w[p] = (p - centre[i]) / (centre[i + 1] - centre[i]);
        }
    }
    return a;
}

}  // namespace

Raster clahe(const Raster& img, const PreprocessConfig& cfg) {
    cfg.validate();
    const int w = img.width();
    const int h = img.height();
    const int n = cfg.clahe_tiles;
    if (n > w || n > h) throw Error("clahe: tile grid (" + std::to_string(n) + ") exceeds image size");

    std::vector<std::array<double, 256>> maps(static_cast<std::size_t>(n) * n);
    for (int ty = 0; ty < n; ++ty) {
        const int y0 = static_cast<int>(static_cast<long long>(ty) * h / n);
        const int y1 = static_cast<int>(static_cast<long long>(ty + 1) * h / n);
        for (int tx = 0; tx < n; ++tx) {
            const int x0 = static_cast<int>(static_cast<long long>(tx) * w / n);
            const int x1 = static_cast<int>(static_cast<long long>(tx + 1) * w / n);
            std::array<double, 256> hist{};
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) hist[img.at(x, y)] += 1.0;
            const double pixels = static_cast<double>(x1 - x0) * (y1 - y0);
            const double limit = std::max(1.0, cfg.clahe_clip * pixels);
            double excess = 0.0;
            for (auto& v : hist) {
                if (v > limit) {
                    excess += v - limit;
                    v = limit;
                }
            }
            const double share = excess / 256.0;
            auto& map = maps[static_cast<std::size_t>(ty) * n + tx];
            double cdf = 0.0;
            for (int v = 0; v < 256; ++v) {
                cdf += hist[v] + share;
                map[v] = std::min(255.0, 255.0 * cdf / pixels);
            }
        }
    }

    const auto ax = axis_weights(w, n);
    const auto ay = axis_weights(h, n);
    Raster out(w, h);
    for (int y = 0; y < h; ++y) {
        const auto& top_l = ay.lo[y];
        const auto& bot_l = ay.hi[y];
        const double wy = ay.w[y];
        for (int x = 0; x < w; ++x) {
            const int v = img.at(x, y);
            const double wx = ax.w[x];
            const double m00 = maps[static_cast<std::size_t>(top_l) * n + ax.lo[x]][v];
            const double m01 = maps[static_cast<std::size_t>(top_l) * n + ax.hi[x]][v];
            const double m10 = maps[static_cast<std::size_t>(bot_l) * n + ax.lo[x]][v];
            const double m11 = maps[static_cast<std::size_t>(bot_l) * n + ax.hi[x]][v];
            const double top = (1.0 - wx) * m00 + wx * m01;
            const double bottom = (1.0 - wx) * m10 + wx * m11;
            out.at(x, y) = round_to_u8((1.0 - wy) * top + wy * bottom);
        }
    }
    return out;
}

double gagc_gamma(const Raster& img, const PreprocessConfig& cfg) {
    cfg.validate();
    if (img.empty()) return 1.0;
    const auto grad = sobel(img);
    double weighted = 0.0;
    double weight = 0.0;
    double plain = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = img.data()[i] / 255.0;
        const double g = grad.magnitude.data()[i];
        weighted += g * v;
        weight += g;
        plain += v;
    }
    const double anchor = weight > 0.0 ? weighted / weight : plain / static_cast<double>(img.size());
    if (anchor <= 0.0) return cfg.gamma_min;
    if (anchor >= 1.0) return cfg.gamma_max;
    return std::clamp(std::log(0.5) / std::log(anchor), cfg.gamma_min, cfg.gamma_max);
}

Raster apply_gamma(const Raster& img, double gamma) {
    std::array<std::uint8_t, 256> lut{};
    for (int v = 0; v < 256; ++v) lut[v] = round_to_u8(255.0 * std::pow(v / 255.0, gamma));
    Raster out(img.width(), img.height());
    for (std::size_t i = 0; i < img.size(); ++i) out.data()[i] = lut[img.data()[i]];
    return out;
}

Raster gagc(const Raster& img, const PreprocessConfig& cfg) { return apply_gamma(img, gagc_gamma(img, cfg)); }

Raster fuzzy_unsharp(const Raster& img, const PreprocessConfig& cfg) {
    cfg.validate();
    const int w = img.width();
    const int h = img.height();
    Raster out(w, h);
    const double lambda = cfg.sharpen_strength;
    const double t = cfg.sharpen_threshold;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double c = img.at(x, y);
            double sum = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (dx || dy) sum += img.clamped(x + dx, y + dy);
            const double d = c - sum / 8.0;
            if (d == 0.0) {
                out.at(x, y) = img.at(x, y);
                continue;
            }
            const double membership = std::min(1.0, std::abs(d) / t);
            out.at(x, y) = round_to_u8(c + lambda * membership * d);
        }
    }
    return out;
}

Raster preprocess(const RgbRaster& img, const PreprocessConfig& cfg) {
    return fuzzy_unsharp(gagc(clahe(green_channel(img), cfg), cfg), cfg);
}

}  // namespace fundus
