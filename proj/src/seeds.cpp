#include "fundus/seeds.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fundus {

namespace {

int half_width_of(const MatchedFilterConfig& cfg) {
    if (!(cfg.sigma > 0.0)) throw Error("matched filter sigma must be > 0");
    if (!(cfg.support >= 3.0)) throw Error("matched filter support must be >= 3 sigma");
    return static_cast<int>(std::ceil(cfg.support * cfg.sigma));
}

std::vector<double> gaussian_taps(double sigma, int half) {
    std::vector<double> g(2 * half + 1);
    for (int i = -half; i <= half; ++i) g[i + half] = std::exp(-(double(i) * i) / (2.0 * sigma * sigma));
    return g;
}

// Separable correlation with clamped borders.
RealRaster separable(const RealRaster& img, const std::vector<double>& taps) {
    const int w = img.width();
    const int h = img.height();
    const int half = static_cast<int>(taps.size()) / 2;
    RealRaster rows(w, h), out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -half; k <= half; ++k) s += taps[k + half] * img.clamped(x + k, y);
            rows.at(x, y) = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -half; k <= half; ++k) s += taps[k + half] * rows.clamped(x, y + k);
            out.at(x, y) = s;
        }
    return out;
}

}  // namespace

std::vector<double> matched_kernel(const MatchedFilterConfig& cfg, int& half_width) {
    half_width = half_width_of(cfg);
    const auto g = gaussian_taps(cfg.sigma, half_width);
    const int k = 2 * half_width + 1;
    std::vector<double> kernel(static_cast<std::size_t>(k) * k);
    double mean = 0.0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) mean += kernel[y * k + x] = -g[x] * g[y];
    mean /= static_cast<double>(kernel.size());
    for (auto& v : kernel) v -= mean;
    return kernel;
}

RealRaster matched_filter(const RealRaster& img, const MatchedFilterConfig& cfg) {
    const int half = half_width_of(cfg);
    const int k = 2 * half + 1;
    if (k > img.width() || k > img.height())
        throw Error("matched filter kernel (" + std::to_string(k) + " px) is larger than the image");

    // k(x,y) = -g(x)g(y) + mean(g), so the response splits into a Gaussian
    // pass and a box pass.
    const auto g = gaussian_taps(cfg.sigma, half);
    double g_sum = 0.0;
    for (double v : g) g_sum += v;
    const double mean = (g_sum * g_sum) / (double(k) * k);

    const auto smooth = separable(img, g);
    const auto box = separable(img, std::vector<double>(k, 1.0));
    RealRaster out(img.width(), img.height());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = mean * box.data()[i] - smooth.data()[i];
    return out;
}

RealRaster matched_filter(const Raster& img, const MatchedFilterConfig& cfg) {
    return matched_filter(to_real(img), cfg);
}

CoHistogram co_histogram(const Raster& img) {
    CoHistogram h;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            int sum = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) sum += img.clamped(x + dx, y + dy);
            const int mean = (2 * sum + 9) / 18;  // round half-up of sum/9
            h.at(img.at(x, y), mean) += 1.0;
        }
    }
    return h;
}

namespace {

constexpr int L = CoHistogram::kLevels;

// 2-D inclusive prefix sums over the five moments the objective needs.
struct Moments {
    std::vector<double> p, a1, a2, b1, b2;  // (L+1)^2 each

    explicit Moments(const CoHistogram& h) {
        const std::size_t n = static_cast<std::size_t>(L + 1) * (L + 1);
        p.assign(n, 0.0);
        a1.assign(n, 0.0);
        a2.assign(n, 0.0);
        b1.assign(n, 0.0);
        b2.assign(n, 0.0);
        double total = 0.0;
        for (double c : h.cells) total += c;
        if (total <= 0.0) throw Error("no threshold exists: empty histogram");
        for (int i = 0; i < L; ++i) {
            const double a = i + 1.0;
            for (int j = 0; j < L; ++j) {
                const double b = j + 1.0;
                const double q = h.at(i, j) / total;
                const std::size_t c = idx(i + 1, j + 1);
                const std::size_t up = idx(i, j + 1), left = idx(i + 1, j), diag = idx(i, j);
                p[c] = q + p[up] + p[left] - p[diag];
                a1[c] = q * a + a1[up] + a1[left] - a1[diag];
                a2[c] = q * a * std::log(a) + a2[up] + a2[left] - a2[diag];
                b1[c] = q * b + b1[up] + b1[left] - b1[diag];
                b2[c] = q * b * std::log(b) + b2[up] + b2[left] - b2[diag];
            }
        }
    }

    // Magnitude of the summed terms, which bounds the rounding error of any quadrant value.
    double scale() const { return a2.back() + b2.back(); }

    static std::size_t idx(int i, int j) { return static_cast<std::size_t>(i) * (L + 1) + j; }

    // Sum over the square [lo, hi]^2.
    double rect(const std::vector<double>& s, int lo, int hi) const {
        return s[idx(hi + 1, hi + 1)] - s[idx(lo, hi + 1)] - s[idx(hi + 1, lo)] + s[idx(lo, lo)];
    }

    std::optional<double> quadrant(int lo, int hi) const {
        const double m0 = rect(p, lo, hi);
        if (m0 <= 0.0) return std::nullopt;
        const double ma = rect(a1, lo, hi);
        const double mb = rect(b1, lo, hi);
        return (rect(a2, lo, hi) - ma * std::log(ma / m0)) + (rect(b2, lo, hi) - mb * std::log(mb / m0));
    }
};

}  // namespace

std::optional<double> cross_entropy_objective(const CoHistogram& h, int t) {
    if (t < 0 || t >= L - 1) return std::nullopt;
    Moments m(h);
    auto bg = m.quadrant(0, t);
    auto fg = m.quadrant(t + 1, L - 1);
    if (!bg || !fg) return std::nullopt;
    return *bg + *fg;
}

int cross_entropy_threshold(const CoHistogram& h) {
    Moments m(h);
    const double tie = 1e-12 * m.scale();
    int best_t = -1;
    double best = 0.0;
    for (int t = 0; t < L - 1; ++t) {
        auto bg = m.quadrant(0, t);
        auto fg = m.quadrant(t + 1, L - 1);
        if (!bg || !fg) continue;
        const double v = *bg + *fg;
        // Plateaus differ only by rounding in the prefix sums; the smallest t wins a tie.
        if (best_t < 0 || v < best - tie) {
            best = v;
            best_t = t;
        }
    }
    if (best_t < 0) throw Error("no threshold exists: histogram has a single populated level");
    return best_t;
}

int glcm_cross_entropy_threshold(const Raster& response) { return cross_entropy_threshold(co_histogram(response)); }

SeedWindow seed_window(const ConnectedComponent& cc, int width, int height, int min_side) {
    auto widen = [min_side](int lo, int hi, double centre, int limit, int& out_lo, int& out_hi) {
        out_lo = lo;
        out_hi = hi;
        const int side = std::min(min_side, limit);
        if (hi - lo + 1 >= side) return;
        out_lo = static_cast<int>(std::floor(centre + 0.5)) - side / 2;
        out_hi = out_lo + side - 1;
        if (out_lo < 0) {
            out_hi -= out_lo;
            out_lo = 0;
        }
        if (out_hi > limit - 1) {
            out_lo -= out_hi - (limit - 1);
            out_hi = limit - 1;
        }
    };
    SeedWindow s;
    s.component = cc.label;
    widen(cc.bbox.left, cc.bbox.right, cc.cx, width, s.bbox.left, s.bbox.right);
    widen(cc.bbox.top, cc.bbox.bottom, cc.cy, height, s.bbox.top, s.bbox.bottom);
    return s;
}

SeedMaps seed_maps(const Raster& img, const SeedConfig& cfg, const BinaryMask* region) {
    if (cfg.open_radius < 1) throw Error("seed opening radius must be >= 1");
    if (cfg.min_side < 1) throw Error("seed minimum window side must be >= 1");
    if (region && !region->same_shape(img)) throw Error("seed region mask does not match the image");
    SeedMaps maps;
    maps.response = normalize_to_u8(matched_filter(img, cfg.filter));
    maps.binary = BinaryMask(img.width(), img.height());
    try {
        maps.threshold = glcm_cross_entropy_threshold(maps.response);
    } catch (const Error&) {
        // Flat response: nothing stands out, so there are no seeds.
        maps.threshold = 255;
        maps.opened = maps.binary;
        return maps;
    }
    maps.binary = threshold_above(maps.response, maps.threshold);
    if (region) maps.binary = mask_and(maps.binary, *region);
    maps.opened = open(maps.binary, StructuringElement::disk(cfg.open_radius));
    for (const auto& cc : connected_components(maps.opened))
        maps.seeds.push_back(seed_window(cc, img.width(), img.height(), cfg.min_side));
    return maps;
}

std::vector<SeedWindow> extract_seeds(const Raster& img, const SeedConfig& cfg, const BinaryMask* region) {
    return seed_maps(img, cfg, region).seeds;
}

}  // namespace fundus
