#include "fundus/raster.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace fundus {

std::optional<BBox> clip_bbox(const BBox& box, int width, int height) {
    BBox c{std::max(box.left, 0), std::max(box.top, 0), std::min(box.right, width - 1),
           std::min(box.bottom, height - 1)};
    if (c.empty()) return std::nullopt;
    return c;
}

RgbRaster::RgbRaster(Raster red, Raster green, Raster blue)
    : r(std::move(red)), g(std::move(green)), b(std::move(blue)) {
    if (!r.same_shape(g) || !g.same_shape(b)) throw Error("RGB planes must share dimensions");
}

double Histogram::total() const { return std::accumulate(bins.begin(), bins.end(), 0.0); }

std::size_t Histogram::nonempty() const {
    return static_cast<std::size_t>(std::count_if(bins.begin(), bins.end(), [](double v) { return v > 0.0; }));
}

Histogram Histogram::normalized() const {
    const double t = total();
    if (t <= 0.0) throw Error("cannot normalize an empty histogram");
    Histogram h(bins);
    for (auto& v : h.bins) v /= t;
    return h;
}

StructuringElement StructuringElement::disk(int radius) {
    if (radius < 1) throw Error("structuring element radius must be >= 1");
    return {SeShape::disk, radius};
}

StructuringElement StructuringElement::square(int radius) {
    if (radius < 1) throw Error("structuring element radius must be >= 1");
    return {SeShape::square, radius};
}

std::vector<Point> StructuringElement::offsets() const {
    std::vector<Point> out;
    const int r2 = radius * radius;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (shape == SeShape::square || dx * dx + dy * dy <= r2) out.push_back({dx, dy});
    return out;
}

std::uint8_t round_to_u8(double v) {
    if (!(v > 0.0)) return 0;  // also catches NaN
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(std::floor(v + 0.5));
}

Raster green_channel(const RgbRaster& img) { return img.g; }

Histogram histogram(const Raster& img) {
    Histogram h(std::vector<double>(256, 0.0));
    for (auto v : img.data()) h.bins[v] += 1.0;
    return h;
}

Raster median_filter(const Raster& img, int k) {
    if (k < 3 || k % 2 == 0) throw Error("median_filter: window size must be odd and >= 3");
    const int w = img.width();
    const int h = img.height();
    Raster out(w, h);
    if (img.empty()) return out;
    const int r = k / 2;
    const int rank = (k * k) / 2;  // zero-based middle of k*k samples

    std::array<int, 256> hist{};
    for (int y = 0; y < h; ++y) {
        hist.fill(0);
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) ++hist[img.clamped(dx, y + dy)];

        // Huang's running median: track the median and the count strictly below it.
        int median = 0;
        int below = 0;
        while (below + hist[median] <= rank) below += hist[median++];
        out.at(0, y) = static_cast<std::uint8_t>(median);

        for (int x = 1; x < w; ++x) {
            for (int dy = -r; dy <= r; ++dy) {
                const int gone = img.clamped(x - r - 1, y + dy);
                const int added = img.clamped(x + r, y + dy);
                --hist[gone];
                if (gone < median) --below;
                ++hist[added];
                if (added < median) ++below;
            }
            while (below > rank) below -= hist[--median];
            while (below + hist[median] <= rank) below += hist[median++];
            out.at(x, y) = static_cast<std::uint8_t>(median);
        }
    }
    return out;
}

RealRaster to_real(const Raster& img) {
    RealRaster out(img.width(), img.height());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
    return out;
}

Raster quantize(const RealRaster& img) {
    Raster out(img.width(), img.height());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = round_to_u8(src[i]);
    return out;
}

Raster normalize_to_u8(const RealRaster& img) {
    Raster out(img.width(), img.height());
    if (img.empty()) return out;
    auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    const double mn = *lo;
    const double span = *hi - mn;
    if (span <= 0.0) return out;
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = round_to_u8(255.0 * (src[i] - mn) / span);
    return out;
}

Gradient sobel(const Raster& img) {
    const int w = img.width();
    const int h = img.height();
    Gradient g{RealRaster(w, h), RealRaster(w, h), RealRaster(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            auto p = [&](int dx, int dy) { return static_cast<double>(img.clamped(x + dx, y + dy)); };
            const double gx = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
            const double gy = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
            g.gx.at(x, y) = gx;
            g.gy.at(x, y) = gy;
            g.magnitude.at(x, y) = std::hypot(gx, gy);
        }
    }
    return g;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher lower envelope, 1-D squared distance transform.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (f[v[k]] == kInf) {
            v[k] = q;
            continue;
        }
        double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = f[v[k]] == kInf ? kInf : dq * dq + f[v[k]];
    }
}

// Squared Euclidean distance from each pixel to the nearest pixel where
// mask == target. Pixels outside the image never count as sources.
RealRaster squared_distance_to(const BinaryMask& mask, std::uint8_t target) {
    const int w = mask.width();
    const int h = mask.height();
    RealRaster dist(w, h, kInf);
    const int n = std::max(w, h);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    for (int x = 0; x < w; ++x) {
        f.resize(h);
        d.resize(h);
        for (int y = 0; y < h; ++y) f[y] = (mask.at(x, y) != 0) == (target != 0) ? 0.0 : kInf;
        edt_1d(f, d, v, z);
        for (int y = 0; y < h; ++y) dist.at(x, y) = d[y];
    }
    for (int y = 0; y < h; ++y) {
        f.resize(w);
        d.resize(w);
        for (int x = 0; x < w; ++x) f[x] = dist.at(x, y);
        edt_1d(f, d, v, z);
        for (int x = 0; x < w; ++x) dist.at(x, y) = d[x];
    }
    return dist;
}

// One-dimensional square-window pass. dilate: any in-bounds 1; erode: all in-bounds 1.
BinaryMask square_pass(const BinaryMask& m, int r, bool horizontal, bool dilating) {
    const int w = m.width();
    const int h = m.height();
    BinaryMask out(w, h);
    const int len = horizontal ? w : h;
    const int lines = horizontal ? h : w;
    std::vector<int> prefix(len + 1);
    for (int l = 0; l < lines; ++l) {
        auto get = [&](int i) { return horizontal ? m.at(i, l) : m.at(l, i); };
        prefix[0] = 0;
        for (int i = 0; i < len; ++i) prefix[i + 1] = prefix[i] + (get(i) ? 1 : 0);
        for (int i = 0; i < len; ++i) {
            const int a = std::max(0, i - r);
            const int b = std::min(len - 1, i + r);
            const int ones = prefix[b + 1] - prefix[a];
            const bool on = dilating ? ones > 0 : ones == b - a + 1;
            if (horizontal)
                out.at(i, l) = on;
            else
                out.at(l, i) = on;
        }
    }
    return out;
}

}  // namespace

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
    if (se.radius < 1) throw Error("structuring element radius must be >= 1");
    if (se.shape == SeShape::square)
        return square_pass(square_pass(mask, se.radius, true, true), se.radius, false, true);
    const double r2 = double(se.radius) * se.radius;
    auto dist = squared_distance_to(mask, 1);
    BinaryMask out(mask.width(), mask.height());
    auto src = dist.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] <= r2;
    return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
    if (se.radius < 1) throw Error("structuring element radius must be >= 1");
    if (se.shape == SeShape::square)
        return square_pass(square_pass(mask, se.radius, true, false), se.radius, false, false);
    const double r2 = double(se.radius) * se.radius;
    auto dist = squared_distance_to(mask, 0);
    BinaryMask out(mask.width(), mask.height());
    auto src = dist.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > r2;
    return out;
}

BinaryMask open(const BinaryMask& mask, const StructuringElement& se) { return dilate(erode(mask, se), se); }
BinaryMask close(const BinaryMask& mask, const StructuringElement& se) { return erode(dilate(mask, se), se); }

BinaryMask complement(const BinaryMask& mask) {
    BinaryMask out(mask.width(), mask.height());
    auto src = mask.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 0 : 1;
    return out;
}

namespace {
template <typename Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, Op op) {
    if (!a.same_shape(b)) throw Error("mask dimensions differ");
    BinaryMask out(a.width(), a.height());
    auto pa = a.data();
    auto pb = b.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < pa.size(); ++i) dst[i] = op(pa[i] != 0, pb[i] != 0) ? 1 : 0;
    return out;
}
}  // namespace

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
    return combine(a, b, [](bool x, bool y) { return x && y; });
}
BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b) {
    return combine(a, b, [](bool x, bool y) { return x && !y; });
}
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
    return combine(a, b, [](bool x, bool y) { return x || y; });
}

std::size_t count(const BinaryMask& mask) {
    return static_cast<std::size_t>(std::count_if(mask.data().begin(), mask.data().end(), [](auto v) { return v != 0; }));
}

bool is_subset(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw Error("mask dimensions differ");
    auto pa = a.data();
    auto pb = b.data();
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (pa[i] && !pb[i]) return false;
    return true;
}

BinaryMask threshold_above(const Raster& img, int t) {
    BinaryMask out(img.width(), img.height());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > t;
    return out;
}

std::vector<ConnectedComponent> connected_components(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<ConnectedComponent> out;
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::deque<Point> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (!mask.at(x, y) || seen[idx]) continue;
            ConnectedComponent cc;
            cc.label = static_cast<int>(out.size()) + 1;
            cc.bbox = {x, y, x, y};
            seen[idx] = 1;
            queue.push_back({x, y});
            double sx = 0.0, sy = 0.0;
            while (!queue.empty()) {
                Point p = queue.front();
                queue.pop_front();
                cc.pixels.push_back(p);
                sx += p.x;
                sy += p.y;
                cc.bbox.left = std::min(cc.bbox.left, p.x);
                cc.bbox.right = std::max(cc.bbox.right, p.x);
                cc.bbox.top = std::min(cc.bbox.top, p.y);
                cc.bbox.bottom = std::max(cc.bbox.bottom, p.y);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = p.x + dx;
                        const int ny = p.y + dy;
                        if (!mask.in_bounds(nx, ny)) continue;
                        const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                        if (mask.at(nx, ny) && !seen[nidx]) {
                            seen[nidx] = 1;
                            queue.push_back({nx, ny});
                        }
                    }
                }
            }
            cc.cx = sx / static_cast<double>(cc.area());
            cc.cy = sy / static_cast<double>(cc.area());
            out.push_back(std::move(cc));
        }
    }
    return out;
}

BinaryMask component_mask(const ConnectedComponent& cc, int width, int height, int offset_x, int offset_y) {
    BinaryMask out(width, height);
    for (const auto& p : cc.pixels) {
        const int x = p.x - offset_x;
        const int y = p.y - offset_y;
        if (out.in_bounds(x, y)) out.at(x, y) = 1;
    }
    return out;
}

BinaryMask largest_component(const BinaryMask& mask) {
    auto ccs = connected_components(mask);
    if (ccs.empty()) return BinaryMask(mask.width(), mask.height());
    auto best = std::max_element(ccs.begin(), ccs.end(),
                                 [](const auto& a, const auto& b) { return a.area() < b.area(); });
    return component_mask(*best, mask.width(), mask.height());
}

BinaryMask fill_holes(const BinaryMask& mask) {
    // Background components that never reach the frame are holes.
    auto background = complement(mask);
    BinaryMask out = mask;
    for (const auto& cc : connected_components(background)) {
        const bool touches = cc.bbox.left == 0 || cc.bbox.top == 0 || cc.bbox.right == mask.width() - 1 ||
                             cc.bbox.bottom == mask.height() - 1;
        if (touches) continue;
        for (const auto& p : cc.pixels) out.at(p.x, p.y) = 1;
    }
    return out;
}

RgbRaster crop(const RgbRaster& img, const BBox& box) {
    return RgbRaster(crop(img.r, box), crop(img.g, box), crop(img.b, box));
}

}  // namespace fundus
