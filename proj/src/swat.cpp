#include "fundus/swat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fundus {

namespace {

// Occupied levels of a normalized histogram with prefix moments over them.
struct Compressed {
    std::vector<int> level;
    std::vector<double> w0;  // prefix probability, size K+1
    std::vector<double> w1;  // prefix first moment, size K+1
    double mean = 0.0;
    double variance = 0.0;

    explicit Compressed(const Histogram& hist) {
        const auto p = hist.normalized();
        w0.push_back(0.0);
        w1.push_back(0.0);
        for (int v = 0; v < p.levels(); ++v) {
            if (!(p.bins[v] > 0.0)) continue;
            level.push_back(v);
            w0.push_back(w0.back() + p.bins[v]);
            w1.push_back(w1.back() + p.bins[v] * v);
        }
        mean = w1.back();
        for (int v = 0; v < p.levels(); ++v)
            if (p.bins[v] > 0.0) variance += p.bins[v] * (v - mean) * (v - mean);
    }

    int size() const { return static_cast<int>(level.size()); }

    // omega * mu^2 for compressed bins [a, b).
    double cost(int a, int b) const {
        const double w = w0[b] - w0[a];
        if (w <= 0.0) return 0.0;
        const double m = w1[b] - w1[a];
        return m * m / w;
    }
};

double tolerance(double v) { return 1e-12 * std::max(1.0, std::abs(v)); }

// Splits are compressed boundary indices: region z spans [s[z-1], s[z]).
std::vector<int> exhaustive_splits(const Compressed& c, int regions) {
    const int k = c.size();
    std::vector<int> best_split;
    double best = -std::numeric_limits<double>::infinity();
    if (regions == 2) {
        for (int s = 1; s < k; ++s) {
            const double v = c.cost(0, s) + c.cost(s, k);
            if (best_split.empty() || v > best + tolerance(best)) {
                best = v;
                best_split = {s};
            }
        }
    } else {
        for (int s1 = 1; s1 < k - 1; ++s1) {
            const double head = c.cost(0, s1);
            for (int s2 = s1 + 1; s2 < k; ++s2) {
                const double v = head + c.cost(s1, s2) + c.cost(s2, k);
                if (best_split.empty() || v > best + tolerance(best)) {
                    best = v;
                    best_split = {s1, s2};
                }
            }
        }
    }
    return best_split;
}

std::vector<int> dp_splits(const Compressed& c, int regions) {
    const int k = c.size();
    const double neg = -std::numeric_limits<double>::infinity();
    // suffix[z][i]: best value splitting bins [i, k) into z regions.
    std::vector<std::vector<double>> suffix(regions + 1, std::vector<double>(k + 1, neg));
    for (int i = 0; i < k; ++i) suffix[1][i] = c.cost(i, k);
    for (int z = 2; z <= regions; ++z) {
        for (int i = 0; i + z <= k; ++i) {
            double best = neg;
            for (int s = i + 1; s + (z - 1) <= k; ++s) best = std::max(best, c.cost(i, s) + suffix[z - 1][s]);
            suffix[z][i] = best;
        }
    }
    // Walk forward taking the smallest boundary that still reaches the optimum.
    std::vector<int> splits;
    int start = 0;
    double target = suffix[regions][0];
    for (int z = regions; z >= 2; --z) {
        for (int s = start + 1; s + (z - 1) <= k; ++s) {
            const double v = c.cost(start, s) + suffix[z - 1][s];
            if (v >= target - tolerance(target)) {
                splits.push_back(s);
                target -= c.cost(start, s);
                start = s;
                break;
            }
        }
    }
    return splits;
}

}  // namespace

double between_region_variance(const Histogram& hist, const std::vector<int>& thresholds) {
    const auto p = hist.normalized();
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (thresholds[i] < 0 || thresholds[i] >= p.levels()) throw Error("threshold outside histogram range");
        if (i > 0 && thresholds[i] <= thresholds[i - 1]) throw Error("thresholds must be strictly increasing");
    }
    double mean = 0.0;
    for (int v = 0; v < p.levels(); ++v) mean += p.bins[v] * v;
    double sigma = 0.0;
    int lo = 0;
    for (std::size_t z = 0; z <= thresholds.size(); ++z) {
        const int hi = z < thresholds.size() ? thresholds[z] : p.levels() - 1;
        double w = 0.0, m = 0.0;
        for (int v = lo; v <= hi; ++v) {
            w += p.bins[v];
            m += p.bins[v] * v;
        }
        if (w > 0.0) {
            const double mu = m / w;
            sigma += w * (mu - mean) * (mu - mean);
        }
        lo = hi + 1;
    }
    return sigma;
}

OtsuResult multilevel_otsu(const Histogram& hist, int regions) {
    if (regions < kMinRegions || regions > kMaxRegions) throw Error("region count must be in [2, 20]");
    Compressed c(hist);
    if (!(c.variance > 0.0)) throw DegenerateWindow("degenerate window: histogram has zero variance");
    if (c.size() < regions) throw Error("histogram has fewer occupied levels than requested regions");

    const auto splits = regions <= 3 ? exhaustive_splits(c, regions) : dp_splits(c, regions);
    OtsuResult r;
    r.regions = regions;
    for (int s : splits) r.thresholds.push_back(c.level[s - 1]);
    r.sigma_t2 = c.variance;
    r.sigma_b2 = between_region_variance(hist, r.thresholds);
    r.eta = r.sigma_b2 / r.sigma_t2;
    return r;
}

OtsuResult adaptive_thresholds(const Histogram& hist) {
    const std::size_t occupied = hist.nonempty();
    int regions = kMinRegions;
    auto result = multilevel_otsu(hist, regions);
    while (result.eta < kEtaTarget && regions < kMaxRegions && occupied >= static_cast<std::size_t>(regions) + 1) {
        ++regions;
        result = multilevel_otsu(hist, regions);
    }
    return result;
}

BinaryMask binarize_min(const Raster& window, const std::vector<int>& thresholds) {
    if (thresholds.empty()) throw Error("binarize_min needs at least one threshold");
    const int t = *std::min_element(thresholds.begin(), thresholds.end());
    BinaryMask out(window.width(), window.height());
    for (std::size_t i = 0; i < window.size(); ++i) out.data()[i] = window.data()[i] <= t;
    return out;
}

PrunedObject prune_objects(const BinaryMask& mask) {
    auto ccs = connected_components(mask);
    if (ccs.empty()) throw Error("no object in window");
    const double xc = (mask.width() - 1) / 2.0;
    const double yc = (mask.height() - 1) / 2.0;
    std::vector<double> dist(ccs.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < ccs.size(); ++i)
        for (const auto& p : ccs[i].pixels) dist[i] = std::min(dist[i], std::hypot(p.x - xc, p.y - yc));

    std::vector<std::size_t> order(ccs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (ccs[a].area() != ccs[b].area()) return ccs[a].area() > ccs[b].area();
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return ccs[a].label < ccs[b].label;
    });
    std::size_t keep = order[0];
    if (order.size() > 1) {
        const std::size_t other = order[1];
        if (dist[other] < dist[keep] || (dist[other] == dist[keep] && ccs[other].label < ccs[keep].label))
            keep = other;
    }
    PrunedObject out;
    out.mask = component_mask(ccs[keep], mask.width(), mask.height());
    out.distance = dist[keep];
    out.object = std::move(ccs[keep]);
    return out;
}

BorderFlags border_flags(const BinaryMask& m) {
    BorderFlags q{false, false, false, false};
    const int w = m.width();
    const int h = m.height();
    for (int y = 0; y < h; ++y) {
        if (m.at(0, y)) q[0] = true;
        if (m.at(w - 1, y)) q[2] = true;
    }
    for (int x = 0; x < w; ++x) {
        if (m.at(x, 0)) q[1] = true;
        if (m.at(x, h - 1)) q[3] = true;
    }
    return q;
}

Expansion expand_window(const BBox& window, const BorderFlags& q, const BinaryMask& s) {
    const int w = s.width();
    const int h = s.height();
    auto column_hits = [&](int x) {
        for (int y = std::max(window.top, 0); y <= std::min(window.bottom, h - 1); ++y)
            if (s.at(x, y)) return true;
        return false;
    };
    auto row_hits = [&](int y) {
        for (int x = std::max(window.left, 0); x <= std::min(window.right, w - 1); ++x)
            if (s.at(x, y)) return true;
        return false;
    };

    const Expansion fail{window, false};
    BBox next = window;
    if (q[0]) {
        next.left = std::max(0, window.left - kGrowLeftTop);
        if (next.left == window.left || !column_hits(next.left)) return fail;
    }
    if (q[1]) {
        next.top = std::max(0, window.top - kGrowLeftTop);
        if (next.top == window.top || !row_hits(next.top)) return fail;
    }
    if (q[2]) {
        next.right = std::min(w - 1, window.right + kGrowRightBottom);
        if (next.right == window.right || !column_hits(next.right)) return fail;
    }
    if (q[3]) {
        next.bottom = std::min(h - 1, window.bottom + kGrowRightBottom);
        if (next.bottom == window.bottom || !row_hits(next.bottom)) return fail;
    }
    return {next, true};
}

std::string to_string(SegmentStatus s) {
    switch (s) {
        case SegmentStatus::complete: return "complete";
        case SegmentStatus::clipped_by_search_space: return "clipped_by_search_space";
        case SegmentStatus::iteration_cap: return "iteration_cap";
    }
    return "unknown";
}

SegmentStatus segment_status_from_string(const std::string& s) {
    if (s == "complete") return SegmentStatus::complete;
    if (s == "clipped_by_search_space") return SegmentStatus::clipped_by_search_space;
    if (s == "iteration_cap") return SegmentStatus::iteration_cap;
    throw Error("unknown segment status: " + s);
}

Segment swat_segment(const Raster& calibrated, const SeedWindow& seed, const BinaryMask& search_space,
                     const SwatConfig& cfg) {
    if (!calibrated.same_shape(search_space)) throw Error("search space does not match the calibrated image");
    if (cfg.max_iter < 1) throw Error("max_iter must be >= 1");
    auto start = clip_bbox(seed.bbox, calibrated.width(), calibrated.height());
    if (!start) throw Error("seed window lies outside the image");
    bool touches_s = false;
    for (int y = start->top; y <= start->bottom && !touches_s; ++y)
        for (int x = start->left; x <= start->right; ++x)
            if (search_space.at(x, y)) {
                touches_s = true;
                break;
            }
    if (!touches_s) throw Error("seed window does not intersect the search space");

    Segment seg;
    seg.window = *start;
    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        const Raster w1 = crop(calibrated, seg.window);
        const auto otsu = adaptive_thresholds(histogram(w1));
        const auto pruned = prune_objects(binarize_min(w1, otsu.thresholds));
        const auto q = border_flags(pruned.mask);

        seg.object = pruned.object;
        for (auto& p : seg.object.pixels) {
            p.x += seg.window.left;
            p.y += seg.window.top;
        }
        seg.object.bbox = {seg.object.bbox.left + seg.window.left, seg.object.bbox.top + seg.window.top,
                           seg.object.bbox.right + seg.window.left, seg.object.bbox.bottom + seg.window.top};
        seg.object.cx += seg.window.left;
        seg.object.cy += seg.window.top;
        seg.iterations = iter;

        if (!any_flag(q)) {
            seg.status = SegmentStatus::complete;
            return seg;
        }
        const auto grown = expand_window(seg.window, q, search_space);
        if (!grown.within_search_space) {
            seg.status = SegmentStatus::clipped_by_search_space;
            return seg;
        }
        seg.window = grown.window;
    }
    seg.status = SegmentStatus::iteration_cap;
    return seg;
}

SegmentationRun segment_all(const Raster& calibrated, const std::vector<SeedWindow>& seeds,
                            const BinaryMask& search_space, const SwatConfig& cfg) {
    SegmentationRun run;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        try {
            auto seg = swat_segment(calibrated, seeds[i], search_space, cfg);
            seg.seed_id = static_cast<int>(i);
            run.segments.push_back(std::move(seg));
        } catch (const Error& e) {
            run.discarded.push_back({static_cast<int>(i), e.what()});
        }
    }
    return run;
}

std::vector<int> encode_rle(const ConnectedComponent& object, const BBox& window) {
    const int w = window.width();
    std::vector<std::uint8_t> on(static_cast<std::size_t>(w) * window.height(), 0);
    for (const auto& p : object.pixels) {
        if (!window.contains(p.x, p.y)) throw Error("object pixel outside its window");
        on[static_cast<std::size_t>(p.y - window.top) * w + (p.x - window.left)] = 1;
    }
    std::vector<int> rle;
    for (std::size_t i = 0; i < on.size();) {
        if (!on[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < on.size() && on[j] && (j == i || j % w != 0)) ++j;
        rle.push_back(static_cast<int>(i));
        rle.push_back(static_cast<int>(j - i));
        i = j;
    }
    return rle;
}

ConnectedComponent decode_rle(const std::vector<int>& rle, const BBox& window, int label) {
    if (rle.size() % 2 != 0) throw Error("run-length list must have even length");
    const int w = window.width();
    const long long cells = window.area();
    ConnectedComponent cc;
    cc.label = label;
    cc.bbox = {window.right, window.bottom, window.left, window.top};
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < rle.size(); i += 2) {
        if (rle[i] < 0 || rle[i + 1] < 1 || rle[i] + static_cast<long long>(rle[i + 1]) > cells)
            throw Error("run-length entry outside the window");
        for (int k = rle[i]; k < rle[i] + rle[i + 1]; ++k) {
            Point p{window.left + k % w, window.top + k / w};
            cc.pixels.push_back(p);
            sx += p.x;
            sy += p.y;
            cc.bbox.left = std::min(cc.bbox.left, p.x);
            cc.bbox.right = std::max(cc.bbox.right, p.x);
            cc.bbox.top = std::min(cc.bbox.top, p.y);
            cc.bbox.bottom = std::max(cc.bbox.bottom, p.y);
        }
    }
    if (!cc.pixels.empty()) {
        cc.cx = sx / cc.pixels.size();
        cc.cy = sy / cc.pixels.size();
    }
    return cc;
}

}  // namespace fundus
