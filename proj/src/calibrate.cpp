#include "fundus/calibrate.hpp"

#include "fundus/swat.hpp"

namespace fundus {

BinaryMask retinal_mask(const RgbRaster& img, const CalibrateConfig& cfg) {
    if (img.g.empty()) throw Error("no retinal area found: empty image");
    const Raster smooth = median_filter(green_channel(img), cfg.median_window);
    BinaryMask fg = threshold_above(smooth, cfg.mask_threshold);
    const double coverage = static_cast<double>(count(fg)) / static_cast<double>(fg.size());
    if (coverage < cfg.min_coverage) {
        try {
            const auto otsu = multilevel_otsu(histogram(smooth), 2);
            fg = threshold_above(smooth, otsu.thresholds.front());
        } catch (const Error&) {
            // Flat image: keep the fixed-threshold result, which is empty or full.
        }
    }
    BinaryMask mask = fill_holes(largest_component(fg));
    if (count(mask) == 0) throw Error("no retinal area found");
    return mask;
}

BinaryMask retinal_border(const BinaryMask& mask, int radius) {
    if (radius < 0) throw Error("border radius must be >= 0");
    if (count(mask) == 0) throw Error("retinal border needs a non-empty mask");
    if (radius == 0) return BinaryMask(mask.width(), mask.height());
    const BinaryMask inner = erode(mask, StructuringElement::disk(radius));
    if (count(inner) == 0) throw Error("erosion removed the whole retinal mask");
    return mask_and_not(mask, inner);
}

Raster calibrate(const Raster& enhanced_green, const BinaryMask& mask, const BinaryMask& border) {
    if (!enhanced_green.same_shape(mask) || !mask.same_shape(border))
        throw Error("calibrate: dimension mismatch between image, mask and border");
    Raster out(enhanced_green.width(), enhanced_green.height());
    for (std::size_t i = 0; i < out.size(); ++i) {
        int v = enhanced_green.data()[i];
        if (!mask.data()[i]) v += 255;
        if (border.data()[i]) v += 255;
        out.data()[i] = static_cast<std::uint8_t>(std::min(v, 255));
    }
    return out;
}

BinaryMask search_space(const BinaryMask& mask, int margin) {
    if (count(mask) == 0) throw Error("search space needs a non-empty mask");
    if (margin <= 0) return mask;
    return dilate(mask, StructuringElement::disk(margin));
}

CalibrationProducts calibrate_image(const RgbRaster& img, const Raster& enhanced_green, const CalibrateConfig& cfg) {
    CalibrationProducts p;
    p.retinal_mask = retinal_mask(img, cfg);
    p.retinal_border = retinal_border(p.retinal_mask, cfg.border_radius);
    p.calibrated = calibrate(enhanced_green, p.retinal_mask, p.retinal_border);
    p.search_space = search_space(p.retinal_mask, cfg.search_margin);
    return p;
}

}  // namespace fundus
