#include "fundus/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace fundus {

namespace {

struct Vec {
    double x = 0.0;
    double y = 0.0;
};

struct Channels {
    double r, g, b;
};

double dist(Vec a, Vec b) { return std::hypot(a.x - b.x, a.y - b.y); }

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(rng_); }

private:
    std::mt19937_64 rng_;
};

// Quadratic Bezier from the optic disc outward past the rim.
std::vector<Vec> vessel_curve(Sampler& s, Vec start, Vec centre, double fov) {
    const double a = s.uniform(0.0, 2.0 * std::numbers::pi);
    const Vec end{centre.x + 1.15 * fov * std::cos(a), centre.y + 1.15 * fov * std::sin(a)};
    const Vec mid{(start.x + end.x) / 2.0 + s.uniform(-0.3, 0.3) * fov,
                  (start.y + end.y) / 2.0 + s.uniform(-0.3, 0.3) * fov};
    std::vector<Vec> pts;
    const int n = 800;
    for (int i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) / n;
        const double u = 1.0 - t;
        pts.push_back({u * u * start.x + 2 * u * t * mid.x + t * t * end.x,
                       u * u * start.y + 2 * u * t * mid.y + t * t * end.y});
    }
    return pts;
}

}  // namespace

SyntheticImage make_synthetic(std::uint64_t seed, const SyntheticConfig& cfg) {
    if (cfg.width < 64 || cfg.height < 64) throw Error("synthetic image must be at least 64x64");
    if (cfg.min_lesions < 0 || cfg.max_lesions < cfg.min_lesions) throw Error("invalid lesion count range");
    if (!(cfg.min_radius > 0.0) || cfg.max_radius < cfg.min_radius) throw Error("invalid lesion radius range");

    Sampler s(seed);
    const int w = cfg.width;
    const int h = cfg.height;
    const Vec centre{(w - 1) / 2.0 + s.uniform(-8.0, 8.0), (h - 1) / 2.0 + s.uniform(-8.0, 8.0)};
    const double fov = cfg.fov_radius;
    const Channels base{s.uniform(195.0, 215.0), s.uniform(140.0, 170.0), s.uniform(60.0, 80.0)};

    const double disc_angle = s.uniform(0.0, 2.0 * std::numbers::pi);
    const Vec disc{centre.x + 0.55 * fov * std::cos(disc_angle), centre.y + 0.55 * fov * std::sin(disc_angle)};

    SyntheticImage out;
    out.field = BinaryMask(w, h);
    std::vector<Channels> px(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto& p = px[static_cast<std::size_t>(y) * w + x];
            const double d = dist({double(x), double(y)}, centre);
            if (d > fov) {
                p = {3.0, 3.0, 3.0};
                continue;
            }
            out.field.at(x, y) = 1;
            const double v = 1.0 - 0.3 * (d / fov) * (d / fov);
            const double glow = 70.0 * std::exp(-std::pow(dist({double(x), double(y)}, disc) / 22.0, 2.0));
            p = {base.r * v + 0.5 * glow, base.g * v + glow, base.b * v + 0.8 * glow};
        }

    // Vessels: 3 px wide, a moderate darkening of every channel.
    std::vector<std::vector<Vec>> vessels;
    BinaryMask vessel_mask(w, h);
    for (int i = 0; i < cfg.vessels; ++i) {
        vessels.push_back(vessel_curve(s, disc, centre, fov));
        for (const Vec& q : vessels.back()) {
            const int qx = static_cast<int>(std::lround(q.x));
            const int qy = static_cast<int>(std::lround(q.y));
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int x = qx + dx, y = qy + dy;
                    if (!vessel_mask.in_bounds(x, y) || !out.field.at(x, y)) continue;
                    if (std::hypot(x - q.x, y - q.y) <= 1.5) vessel_mask.at(x, y) = 1;
                }
        }
    }
    for (std::size_t i = 0; i < px.size(); ++i)
        if (vessel_mask.data()[i]) {
            px[i].r *= 0.92;
            px[i].g *= 0.82;
            px[i].b *= 0.90;
        }

    // Lesions. The first one is a rim or vessel lesion depending on the seed.
    const int wanted = s.integer(cfg.min_lesions, cfg.max_lesions);
    for (int i = 0; i < wanted; ++i) {
        LesionKind kind = LesionKind::interior;
        if (i == 0 && seed % 3 == 1) kind = LesionKind::rim;
        if (i == 0 && seed % 3 == 2 && !vessels.empty()) kind = LesionKind::vessel;
        for (int attempt = 0; attempt < 300; ++attempt) {
            const double u = s.uniform(0.0, 1.0);
            double r = cfg.min_radius * std::pow(cfg.max_radius / cfg.min_radius, u);
            Vec c;
            if (kind == LesionKind::rim) {
                r = std::clamp(r, 15.0, 35.0);
                const double a = s.uniform(0.0, 2.0 * std::numbers::pi);
                const double d = fov - 0.65 * r;
                c = {centre.x + d * std::cos(a), centre.y + d * std::sin(a)};
            } else if (kind == LesionKind::vessel) {
                const auto& curve = vessels[static_cast<std::size_t>(s.integer(0, int(vessels.size()) - 1))];
                const Vec q = curve[static_cast<std::size_t>(s.integer(0, int(curve.size()) - 1))];
                const double a = s.uniform(0.0, 2.0 * std::numbers::pi);
                c = {q.x + 0.7 * r * std::cos(a), q.y + 0.7 * r * std::sin(a)};
                if (dist(c, centre) + r > fov - 8.0 || dist(c, disc) < r + 30.0) continue;
            } else {
                const double a = s.uniform(0.0, 2.0 * std::numbers::pi);
                const double d = (fov - 8.0 - r) * std::sqrt(s.uniform(0.0, 1.0));
                if (d < 0.0) continue;
                c = {centre.x + d * std::cos(a), centre.y + d * std::sin(a)};
                if (dist(c, disc) < r + 30.0) continue;
            }
            bool clear = true;
            for (const auto& other : out.lesions) clear = clear && dist(c, {other.cx, other.cy}) >= r + other.radius + 12.0;
            if (!clear) continue;
            out.lesions.push_back({c.x, c.y, r, kind});
            break;
        }
    }

    // Soft grey-blue shades: negatives for the classifier.
    std::vector<std::pair<Vec, double>> shades;
    for (int i = 0; i < cfg.shades; ++i) {
        for (int attempt = 0; attempt < 300; ++attempt) {
            const double sigma = s.uniform(7.0, 12.0);
            const double a = s.uniform(0.0, 2.0 * std::numbers::pi);
            const double d = (fov - 10.0 - 3.0 * sigma) * std::sqrt(s.uniform(0.0, 1.0));
            const Vec c{centre.x + d * std::cos(a), centre.y + d * std::sin(a)};
            bool clear = dist(c, disc) >= 3.0 * sigma + 30.0;
            for (const auto& l : out.lesions) clear = clear && dist(c, {l.cx, l.cy}) >= l.radius + 3.0 * sigma + 10.0;
            for (const auto& o : shades) clear = clear && dist(c, o.first) >= 3.0 * (sigma + o.second);
            if (!clear) continue;
            shades.emplace_back(c, sigma);
            break;
        }
    }
    for (const auto& [c, sigma] : shades) {
        const int reach = static_cast<int>(std::ceil(3.5 * sigma));
        for (int y = std::max(0, int(c.y) - reach); y <= std::min(h - 1, int(c.y) + reach); ++y)
            for (int x = std::max(0, int(c.x) - reach); x <= std::min(w - 1, int(c.x) + reach); ++x) {
                if (!out.field.at(x, y)) continue;
                const double d = dist({double(x), double(y)}, c);
                const double k = 0.30 * std::exp(-d * d / (2.0 * sigma * sigma));
                auto& p = px[static_cast<std::size_t>(y) * w + x];
                p = {p.r * (1.0 - k), p.g * (1.0 - k), p.b * (1.0 - 0.5 * k)};
            }
    }

    // Lesion fill with one pixel of antialiasing; drawn over vessels.
    out.ground_truth = BinaryMask(w, h);
    for (const auto& l : out.lesions) {
        const int reach = static_cast<int>(std::ceil(l.radius + 1.0));
        for (int y = std::max(0, int(l.cy) - reach); y <= std::min(h - 1, int(l.cy) + reach); ++y)
            for (int x = std::max(0, int(l.cx) - reach); x <= std::min(w - 1, int(l.cx) + reach); ++x) {
                if (!out.field.at(x, y)) continue;
                const double d = dist({double(x), double(y)}, {l.cx, l.cy});
                const double a = std::clamp(l.radius + 0.5 - d, 0.0, 1.0);
                if (d <= l.radius) out.ground_truth.at(x, y) = 1;
                if (a <= 0.0) continue;
                auto& p = px[static_cast<std::size_t>(y) * w + x];
                const double bg_r = p.r, bg_g = p.g, bg_b = p.b;
                p = {bg_r * (1.0 - a * 0.38), bg_g * (1.0 - a * 0.64), bg_b * (1.0 - a * 0.50)};
            }
    }

    out.rgb = RgbRaster(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto& p = px[static_cast<std::size_t>(y) * w + x];
            out.rgb.r.at(x, y) = round_to_u8(p.r + s.normal(cfg.noise_sigma));
            out.rgb.g.at(x, y) = round_to_u8(p.g + s.normal(cfg.noise_sigma));
            out.rgb.b.at(x, y) = round_to_u8(p.b + s.normal(cfg.noise_sigma));
        }
    return out;
}

BinaryMask lesion_mask(const SyntheticImage& img, std::size_t idx) {
    if (idx >= img.lesions.size()) throw Error("lesion index out of range");
    const auto& l = img.lesions[idx];
    BinaryMask m(img.field.width(), img.field.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            m.at(x, y) = img.field.at(x, y) && std::hypot(x - l.cx, y - l.cy) <= l.radius;
    return m;
}

}  // namespace fundus
