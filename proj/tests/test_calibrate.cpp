#include <cmath>

#include "doctest.h"
#include "fundus/calibrate.hpp"

using namespace fundus;

namespace {

BinaryMask disk_mask(int w, int h, double cx, double cy, double r) {
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(x, y) = std::hypot(x - cx, y - cy) <= r;
    return m;
}

RgbRaster fundus_like(const BinaryMask& disk, std::uint8_t level) {
    RgbRaster img(disk.width(), disk.height());
    for (std::size_t i = 0; i < disk.size(); ++i)
        if (disk.data()[i]) {
            img.r.data()[i] = 180;
            img.g.data()[i] = level;
            img.b.data()[i] = 60;
        }
    return img;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    return static_cast<double>(count(mask_and(a, b))) / static_cast<double>(count(mask_or(a, b)));
}

// Largest and smallest radius at which a ray from the centre meets the mask, over 360 rays.
std::pair<double, double> radial_extent(const BinaryMask& m, double cx, double cy) {
    double lo = 1e9, hi = 0.0;
    for (int a = 0; a < 360; ++a) {
        const double th = a * M_PI / 180.0;
        double last = 0.0;
        for (double r = 0.0; r < 400.0; r += 0.25) {
            const int x = static_cast<int>(std::lround(cx + r * std::cos(th)));
            const int y = static_cast<int>(std::lround(cy + r * std::sin(th)));
            if (!m.in_bounds(x, y)) break;
            if (m.at(x, y)) last = r;
        }
        lo = std::min(lo, last);
        hi = std::max(hi, last);
    }
    return {lo, hi};
}

}  // namespace

TEST_CASE("retinal mask") {
    // Fundus-scale radius: the 25-px median rounds a boundary by well under a pixel.
    const BinaryMask disk = disk_mask(340, 320, 170.0, 160.0, 150.0);
    const BinaryMask m = retinal_mask(fundus_like(disk, 120));
    CHECK(iou(m, disk) >= 0.99);
    CHECK(connected_components(m).size() == 1);

    CHECK_THROWS_AS(retinal_mask(RgbRaster(64, 64)), Error);

    // A lesion-dark hole inside the disk is filled back in.
    RgbRaster holed = fundus_like(disk, 120);
    for (int y = 150; y < 180; ++y)
        for (int x = 160; x < 190; ++x) holed.g.at(x, y) = 2;
    CHECK(iou(retinal_mask(holed), disk) >= 0.99);

    // A faint retina under the fixed level falls back to the Otsu split.
    const BinaryMask faint = retinal_mask(fundus_like(disk, 12));
    CHECK(iou(faint, disk) >= 0.99);
}

TEST_CASE("retinal border") {
    BinaryMask square(24, 24);
    for (int y = 2; y < 22; ++y)
        for (int x = 2; x < 22; ++x) square.at(x, y) = 1;
    const BinaryMask frame = retinal_border(square, 2);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            const bool inside = x >= 2 && x < 22 && y >= 2 && y < 22;
            const bool deep = x >= 4 && x < 20 && y >= 4 && y < 20;
            REQUIRE(static_cast<bool>(frame.at(x, y)) == (inside && !deep));
        }

    CHECK(count(retinal_border(square, 0)) == 0);
    CHECK_THROWS_AS(retinal_border(square, 15), Error);
    CHECK_THROWS_AS(retinal_border(BinaryMask(5, 5), 2), Error);

    const BinaryMask disk = disk_mask(200, 200, 100.0, 100.0, 70.0);
    for (int r : {3, 5, 8}) {
        const BinaryMask ring = retinal_border(disk, r);
        CHECK(is_subset(ring, disk));
        // Ring width along each ray.
        double worst_lo = 1e9, worst_hi = 0.0;
        for (int a = 0; a < 360; a += 3) {
            const double th = a * M_PI / 180.0;
            double first = -1.0, last = -1.0;
            for (double t = 0.0; t < 90.0; t += 0.25) {
                const int x = static_cast<int>(std::lround(100.0 + t * std::cos(th)));
                const int y = static_cast<int>(std::lround(100.0 + t * std::sin(th)));
                if (ring.at(x, y)) {
                    if (first < 0) first = t;
                    last = t;
                }
            }
            const double width = last - first + 1.0;
            worst_lo = std::min(worst_lo, width);
            worst_hi = std::max(worst_hi, width);
        }
        CHECK(worst_lo >= r - 1.0);
        CHECK(worst_hi <= r + 1.0 + 0.5);
    }
}

TEST_CASE("calibrated composite") {
    const BinaryMask disk = disk_mask(120, 120, 60.0, 60.0, 45.0);
    const BinaryMask border = retinal_border(disk, 5);
    Raster enhanced(120, 120, std::uint8_t{140});
    // Dark blob straddling the rim.
    for (int y = 0; y < 120; ++y)
        for (int x = 0; x < 120; ++x)
            if (std::hypot(x - 103.0, y - 60.0) <= 8.0) enhanced.at(x, y) = 40;

    const Raster cal = calibrate(enhanced, disk, border);
    for (int y = 0; y < 120; ++y)
        for (int x = 0; x < 120; ++x) {
            if (!disk.at(x, y) || border.at(x, y)) REQUIRE(cal.at(x, y) == 255);
            else REQUIRE(cal.at(x, y) == enhanced.at(x, y));
        }
    // Blob pixels inside the rim ring stay dark against the saturated ring.
    CHECK(cal.at(97, 60) < 128);
    CHECK(cal.at(101, 52) == 255);

    CHECK_THROWS_AS(calibrate(Raster(10, 10), BinaryMask(10, 11), BinaryMask(10, 10)), Error);
}

TEST_CASE("search space") {
    const BinaryMask disk = disk_mask(420, 420, 210.0, 210.0, 100.0);
    const BinaryMask s = search_space(disk, 80);
    CHECK(is_subset(disk, s));
    const auto [lo, hi] = radial_extent(s, 210.0, 210.0);
    CHECK(lo >= 179.0);
    CHECK(hi <= 181.0);

    BinaryMask edge(50, 40);
    for (int y = 0; y < 40; ++y) edge.at(0, y) = 1;
    const BinaryMask clipped = search_space(edge, 80);
    CHECK(clipped.width() == 50);
    CHECK(count(clipped) == 50u * 40u);

    CHECK_THROWS_AS(search_space(BinaryMask(5, 5), 80), Error);
}

TEST_CASE("full calibration keeps its invariants") {
    const BinaryMask disk = disk_mask(200, 180, 100.0, 90.0, 80.0);
    const RgbRaster img = fundus_like(disk, 130);
    const CalibrationProducts p = calibrate_image(img, img.g);
    CHECK(is_subset(p.retinal_border, p.retinal_mask));
    CHECK(is_subset(p.retinal_mask, p.search_space));
    CHECK(p.calibrated.same_shape(p.retinal_mask));
    for (std::size_t i = 0; i < p.calibrated.size(); ++i)
        if (!p.retinal_mask.data()[i]) REQUIRE(p.calibrated.data()[i] == 255);
}
