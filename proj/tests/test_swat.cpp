#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "fundus/swat.hpp"

using namespace fundus;

namespace {

// Direct weighted between-region variance; region z is (t[z-1], t[z]].
double variance_oracle(const std::vector<double>& counts, const std::vector<int>& t) {
    double total = 0.0, mean = 0.0;
    for (std::size_t v = 0; v < counts.size(); ++v) total += counts[v];
    for (std::size_t v = 0; v < counts.size(); ++v) mean += counts[v] / total * static_cast<double>(v);
    double out = 0.0;
    int lo = 0;
    for (std::size_t z = 0; z <= t.size(); ++z) {
        const int hi = z < t.size() ? t[z] : static_cast<int>(counts.size()) - 1;
        double w = 0.0, m = 0.0;
        for (int v = lo; v <= hi; ++v) {
            w += counts[v] / total;
            m += counts[v] / total * v;
        }
        if (w > 0.0) out += w * (m / w - mean) * (m / w - mean);
        lo = hi + 1;
    }
    return out;
}

struct Brute {
    std::vector<int> best;
    double value = -1.0;
};

// Every strictly increasing (R-1)-tuple over [0, L-2] in lexicographic order.
Brute brute_force(const std::vector<double>& counts, int regions) {
    Brute b;
    const int levels = static_cast<int>(counts.size());
    std::vector<int> t(regions - 1);
    std::function<void(int, int)> rec = [&](int pos, int from) {
        if (pos == regions - 1) {
            const double v = variance_oracle(counts, t);
            if (v > b.value + 1e-12) b.value = v, b.best = t;
            return;
        }
        for (int x = from; x <= levels - 2; ++x) {
            t[pos] = x;
            rec(pos + 1, x + 1);
        }
    };
    rec(0, 0);
    return b;
}

std::vector<double> random_counts(std::mt19937_64& rng, int levels, int min_occupied) {
    std::vector<double> c(levels, 0.0);
    for (;;) {
        for (auto& v : c) v = rng() % 3 == 0 ? 0.0 : static_cast<double>(1 + rng() % 40);
        int occ = 0;
        for (double v : c) occ += v > 0.0;
        if (occ >= min_occupied) return c;
    }
}

Raster field_with_disk(int w, int h, double cx, double cy, double r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> noise(-4, 4);
    Raster img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool in = std::hypot(x - cx, y - cy) <= r;
            img.at(x, y) = static_cast<std::uint8_t>((in ? 60 : 200) + noise(rng));
        }
    return img;
}

BinaryMask all_of(int w, int h) {
    BinaryMask m(w, h);
    for (auto& v : m.data()) v = 1;
    return m;
}

double iou_with_disk(const ConnectedComponent& obj, double cx, double cy, double r, int w, int h) {
    const BinaryMask got = component_mask(obj, w, h);
    long long inter = 0, uni = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool g = std::hypot(x - cx, y - cy) <= r;
            inter += g && got.at(x, y);
            uni += g || got.at(x, y);
        }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TEST_CASE("multilevel otsu closed forms") {
    std::vector<double> two(256, 0.0);
    two[10] = two[200] = 0.5;
    const OtsuResult r = multilevel_otsu(Histogram(two), 2);
    REQUIRE(r.thresholds.size() == 1);
    CHECK(r.thresholds[0] >= 10);
    CHECK(r.thresholds[0] <= 199);
    CHECK(r.sigma_b2 == doctest::Approx(9025.0));
    CHECK(r.sigma_t2 == doctest::Approx(9025.0));
    CHECK(r.eta == doctest::Approx(1.0));

    std::vector<double> uniform(8, 1.0);
    const Brute b = brute_force(uniform, 2);
    const OtsuResult u = multilevel_otsu(Histogram(uniform), 2);
    CHECK(u.thresholds == b.best);
    CHECK(u.sigma_b2 == doctest::Approx(b.value).epsilon(1e-12));

    std::vector<double> one(256, 0.0);
    one[77] = 12.0;
    CHECK_THROWS_AS(multilevel_otsu(Histogram(one), 2), DegenerateWindow);
    CHECK_THROWS_AS(multilevel_otsu(Histogram(two), 3), Error);
    CHECK_THROWS_AS(multilevel_otsu(Histogram(uniform), 1), Error);
    CHECK_THROWS_AS(multilevel_otsu(Histogram(uniform), 21), Error);
}

TEST_CASE("multilevel otsu equals exhaustive enumeration") {
    std::mt19937_64 rng(314);
    for (int trial = 0; trial < 120; ++trial) {
        const int regions = 2 + trial % 3;
        const auto counts = random_counts(rng, 16, regions);
        const Brute b = brute_force(counts, regions);
        const OtsuResult r = multilevel_otsu(Histogram(counts), regions);
        REQUIRE(r.thresholds.size() == static_cast<std::size_t>(regions - 1));
        CHECK(std::abs(r.sigma_b2 - b.value) <= 1e-9 * std::max(1.0, b.value));
        CHECK(std::abs(variance_oracle(counts, r.thresholds) - b.value) <= 1e-9 * std::max(1.0, b.value));
        CHECK(r.thresholds == b.best);
        CHECK(r.eta <= 1.0 + 1e-9);
    }

    // The dynamic program serves R >= 4; larger R checked on small level counts.
    for (int trial = 0; trial < 20; ++trial) {
        const auto counts = random_counts(rng, 11, 7);
        for (int regions = 5; regions <= 6; ++regions) {
            const Brute b = brute_force(counts, regions);
            const OtsuResult r = multilevel_otsu(Histogram(counts), regions);
            CHECK(r.thresholds == b.best);
        }
    }
}

TEST_CASE("eta does not decrease with more regions") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        const auto counts = random_counts(rng, 32, 7);
        double prev = -1.0;
        for (int regions = 2; regions <= 6; ++regions) {
            const double eta = multilevel_otsu(Histogram(counts), regions).eta;
            CHECK(eta >= prev - 1e-9);
            prev = eta;
        }
    }
}

TEST_CASE("adaptive region count") {
    std::vector<double> two(256, 0.0);
    two[10] = two[200] = 1.0;
    const OtsuResult a = adaptive_thresholds(Histogram(two));
    CHECK(a.regions == 2);
    CHECK(a.thresholds.size() == 1);

    // Three equal clusters: eta is exactly 0.75 at R=2 and 1 at R=3.
    std::vector<double> three(16, 0.0);
    three[2] = three[8] = three[14] = 1.0;
    CHECK(brute_force(three, 2).value / 24.0 == doctest::Approx(0.75));
    CHECK(multilevel_otsu(Histogram(three), 2).eta < kEtaTarget);
    const OtsuResult t = adaptive_thresholds(Histogram(three));
    CHECK(t.regions == 3);
    CHECK(t.thresholds.size() == 2);
    CHECK(t.eta >= kEtaTarget);

    // A heavy spike plus a long flat tail stays hard to separate; the loop is still bounded.
    std::vector<double> tail(256, 1.0);
    tail[0] = 1e6;
    const OtsuResult capped = adaptive_thresholds(Histogram(tail));
    CHECK(capped.regions <= kMaxRegions);
    CHECK(capped.thresholds.size() == static_cast<std::size_t>(capped.regions - 1));
}

TEST_CASE("binarize on the lowest threshold") {
    const Raster w1(2, 2, std::vector<std::uint8_t>{5, 100, 200, 5});
    CHECK(binarize_min(w1, {50}) == BinaryMask(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1}));
    CHECK(binarize_min(w1, {120, 50}) == BinaryMask(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1}));
    CHECK(count(binarize_min(w1, {200})) == 4);
    CHECK(count(binarize_min(w1, {4})) == 0);
    CHECK_THROWS_AS(binarize_min(w1, {}), Error);
}

TEST_CASE("object pruning") {
    BinaryMask m(5, 5);
    m.at(0, 0) = 1;
    m.at(2, 3) = 1;
    const PrunedObject p = prune_objects(m);
    CHECK(p.mask.at(2, 3) == 1);
    CHECK(p.mask.at(0, 0) == 0);
    CHECK(p.distance == doctest::Approx(1.0));

    // Areas 100, 50, 10: the small central object is pruned before the distance test.
    BinaryMask three(40, 40);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) three.at(x, y) = 1;
    for (int y = 30; y < 40; ++y)
        for (int x = 25; x < 30; ++x) three.at(x, y) = 1;
    for (int x = 17; x < 22; ++x)
        for (int y = 19; y < 21; ++y) three.at(x, y) = 1;
    const PrunedObject k = prune_objects(three);
    CHECK(k.object.area() == 50);

    BinaryMask single(6, 6);
    single.at(1, 1) = single.at(1, 2) = 1;
    CHECK(prune_objects(single).mask == single);

    CHECK_THROWS_AS(prune_objects(BinaryMask(4, 4)), Error);
}

TEST_CASE("border flags") {
    BinaryMask inner(6, 6);
    inner.at(2, 3) = 1;
    CHECK(border_flags(inner) == BorderFlags{false, false, false, false});

    BinaryMask left(6, 6);
    left.at(0, 2) = left.at(1, 2) = 1;
    CHECK(border_flags(left) == BorderFlags{true, false, false, false});

    BinaryMask span(6, 6);
    for (int x = 0; x < 6; ++x) span.at(x, 3) = 1;
    CHECK(border_flags(span) == BorderFlags{true, false, true, false});
}

TEST_CASE("window expansion") {
    const BinaryMask s = all_of(100, 100);
    const BBox v{20, 30, 40, 50};
    const Expansion l = expand_window(v, {true, false, false, false}, s);
    CHECK(l.within_search_space);
    CHECK(l.window == BBox{15, 30, 40, 50});

    const Expansion rb = expand_window(v, {false, false, true, true}, s);
    CHECK(rb.within_search_space);
    CHECK(rb.window == BBox{20, 30, 50, 60});

    // The left edge already sits on the boundary of S.
    BinaryMask half(100, 100);
    for (int y = 0; y < 100; ++y)
        for (int x = 20; x < 100; ++x) half.at(x, y) = 1;
    const Expansion stop = expand_window(v, {true, false, false, false}, half);
    CHECK_FALSE(stop.within_search_space);
    CHECK(stop.window == v);

    // The image frame also bounds the window.
    const Expansion frame = expand_window(BBox{0, 0, 10, 10}, {true, false, false, false}, s);
    CHECK_FALSE(frame.within_search_space);
    const Expansion partial = expand_window(BBox{92, 3, 97, 9}, {false, true, true, false}, s);
    CHECK(partial.within_search_space);
    CHECK(partial.window == BBox{92, 0, 99, 9});
}

TEST_CASE("segment status names round trip") {
    for (auto s : {SegmentStatus::complete, SegmentStatus::clipped_by_search_space, SegmentStatus::iteration_cap})
        CHECK(segment_status_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(segment_status_from_string("done"), Error);
}

TEST_CASE("swat on a disk inside its seed window") {
    const Raster img = field_with_disk(160, 160, 80.0, 80.0, 15.0, 1);
    const BinaryMask s = all_of(160, 160);
    const Segment seg = swat_segment(img, SeedWindow{BBox{50, 50, 109, 109}, 1}, s);
    CHECK(seg.status == SegmentStatus::complete);
    CHECK(seg.iterations == 1);
    CHECK(iou_with_disk(seg.object, 80.0, 80.0, 15.0, 160, 160) >= 0.9);
    for (const auto& p : seg.object.pixels) REQUIRE(seg.window.contains(p.x, p.y));
}

TEST_CASE("swat grows a small seed over a large disk") {
    const Raster img = field_with_disk(240, 240, 120.0, 120.0, 40.0, 2);
    const BinaryMask s = all_of(240, 240);
    // Straddles the left rim of the disk.
    const SeedWindow seed{BBox{75, 110, 94, 129}, 1};
    const Segment seg = swat_segment(img, seed, s);
    CHECK(seg.status == SegmentStatus::complete);
    CHECK(seg.iterations > 1);
    CHECK(seg.window.left < 80);
    CHECK(seg.window.top < 80);
    CHECK(seg.window.right > 160);
    CHECK(seg.window.bottom > 160);
    CHECK(iou_with_disk(seg.object, 120.0, 120.0, 40.0, 240, 240) >= 0.9);
    for (const auto& p : seg.object.pixels) REQUIRE(seg.window.contains(p.x, p.y));

    SwatConfig one;
    one.max_iter = 1;
    CHECK(swat_segment(img, seed, s, one).status == SegmentStatus::iteration_cap);
}

TEST_CASE("swat stops where a vessel leaves the search space") {
    Raster img(240, 240, std::uint8_t{200});
    for (int y = 117; y <= 122; ++y)
        for (int x = 0; x < 240; ++x) img.at(x, y) = 70;
    BinaryMask s(240, 240);
    for (int y = 0; y < 240; ++y)
        for (int x = 0; x < 240; ++x) s.at(x, y) = std::hypot(x - 120.0, y - 120.0) <= 60.0;
    const Segment seg = swat_segment(img, SeedWindow{BBox{112, 112, 127, 127}, 1}, s);
    CHECK(seg.status == SegmentStatus::clipped_by_search_space);
    for (const auto& p : seg.object.pixels) REQUIRE(seg.window.contains(p.x, p.y));
}

TEST_CASE("swat input errors and batch reporting") {
    const Raster img = field_with_disk(100, 100, 50.0, 50.0, 10.0, 3);
    const BinaryMask s = all_of(100, 100);
    Raster flat(100, 100, std::uint8_t{180});
    CHECK_THROWS_AS(swat_segment(flat, SeedWindow{BBox{10, 10, 30, 30}, 1}, s), DegenerateWindow);
    CHECK_THROWS_AS(swat_segment(img, SeedWindow{BBox{10, 10, 30, 30}, 1}, BinaryMask(99, 100)), Error);
    CHECK_THROWS_AS(swat_segment(img, SeedWindow{BBox{200, 200, 220, 220}, 1}, s), Error);
    CHECK_THROWS_AS(swat_segment(img, SeedWindow{BBox{10, 10, 30, 30}, 1}, BinaryMask(100, 100)), Error);

    Raster mixed = img;
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) mixed.at(x, y) = 150;
    const auto run = segment_all(mixed, {SeedWindow{BBox{0, 0, 15, 15}, 1}, SeedWindow{BBox{35, 35, 64, 64}, 2}}, s);
    REQUIRE(run.discarded.size() == 1);
    CHECK(run.discarded[0].seed_id == 0);
    CHECK(run.discarded[0].reason.find("degenerate window") != std::string::npos);
    REQUIRE(run.segments.size() == 1);
    CHECK(run.segments[0].seed_id == 1);
}

TEST_CASE("run-length encoding round trip") {
    const BBox window{10, 20, 17, 24};
    BinaryMask m(8, 5);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        for (auto& v : m.data()) v = rng() % 2;
        if (count(m) == 0) continue;
        ConnectedComponent obj;
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 8; ++x)
                if (m.at(x, y)) obj.pixels.push_back({x + 10, y + 20});
        const auto rle = encode_rle(obj, window);
        const ConnectedComponent back = decode_rle(rle, window);
        CHECK(back.pixels == obj.pixels);
        // Runs never wrap across rows.
        for (std::size_t i = 0; i < rle.size(); i += 2) CHECK(rle[i] / 8 == (rle[i] + rle[i + 1] - 1) / 8);
    }
    ConnectedComponent outside;
    outside.pixels = {{0, 0}};
    CHECK_THROWS_AS(encode_rle(outside, window), Error);
    CHECK_THROWS_AS(decode_rle({0}, window), Error);
    CHECK_THROWS_AS(decode_rle({38, 3}, window), Error);
}
