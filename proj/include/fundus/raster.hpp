#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fundus/error.hpp"

namespace fundus {

// Inclusive pixel rectangle: (left, top) .. (right, bottom).
struct BBox {
    int left = 0;
    int top = 0;
    int right = -1;
    int bottom = -1;

    int width() const { return right - left + 1; }
    int height() const { return bottom - top + 1; }
    long long area() const { return empty() ? 0 : static_cast<long long>(width()) * height(); }
    bool empty() const { return right < left || bottom < top; }
    bool contains(int x, int y) const { return x >= left && x <= right && y >= top && y <= bottom; }

    bool operator==(const BBox&) const = default;
};

// Intersection with [0,w) x [0,h); nullopt when nothing is left.
std::optional<BBox> clip_bbox(const BBox& box, int width, int height);

struct Point {
    int x = 0;
    int y = 0;
    bool operator==(const Point&) const = default;
};

// Row-major 2-D plane. Tag only exists to keep masks and rasters apart.
template <typename T, typename Tag = void>
class Plane {
public:
    using value_type = T;

    Plane() = default;
    Plane(int width, int height, T fill = T{})
        : width_(width), height_(height) {
        if (width < 0 || height < 0) throw Error("plane dimensions must be non-negative");
        data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
    }
    Plane(int width, int height, std::vector<T> data)
        : width_(width), height_(height), data_(std::move(data)) {
        if (width < 0 || height < 0 ||
            data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
            throw Error("plane data length does not match width*height");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& at(int x, int y) { return data_[index(x, y)]; }
    const T& at(int x, int y) const { return data_[index(x, y)]; }

    // Edge replication for out-of-range coordinates.
    const T& clamped(int x, int y) const {
        x = std::clamp(x, 0, width_ - 1);
        y = std::clamp(y, 0, height_ - 1);
        return data_[index(x, y)];
    }

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::span<const T> row(int y) const {
        return std::span<const T>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
    }

    template <typename U, typename OtherTag>
    bool same_shape(const Plane<U, OtherTag>& other) const {
        return width_ == other.width() && height_ == other.height();
    }

    bool operator==(const Plane&) const = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

struct MaskTag {};

// 8-bit intensities in [0,255].
using Raster = Plane<std::uint8_t>;
// Real-valued intermediates (filter responses, normalized intensities).
using RealRaster = Plane<double>;
// Foreground = 1, background = 0.
using BinaryMask = Plane<std::uint8_t, MaskTag>;

struct RgbRaster {
    Raster r;
    Raster g;
    Raster b;

    RgbRaster() = default;
    RgbRaster(int width, int height) : r(width, height), g(width, height), b(width, height) {}
    RgbRaster(Raster red, Raster green, Raster blue);

    int width() const { return g.width(); }
    int height() const { return g.height(); }
    bool operator==(const RgbRaster&) const = default;
};

// Counts (or probabilities) per gray level. 256 bins for 8-bit rasters, but
// the threshold search works on any level count.
struct Histogram {
    std::vector<double> bins;

    Histogram() = default;
    explicit Histogram(std::vector<double> b) : bins(std::move(b)) {}

    int levels() const { return static_cast<int>(bins.size()); }
    double total() const;
    std::size_t nonempty() const;
    Histogram normalized() const;
};

enum class SeShape { disk, square };

struct StructuringElement {
    SeShape shape = SeShape::disk;
    int radius = 1;

    static StructuringElement disk(int radius);
    static StructuringElement square(int radius);
    // Offsets (dx,dy) covered by the element; used by the brute-force oracles.
    std::vector<Point> offsets() const;
};

struct ConnectedComponent {
    int label = 0;
    std::vector<Point> pixels;
    BBox bbox;
    double cx = 0.0;
    double cy = 0.0;

    std::size_t area() const { return pixels.size(); }
};

std::uint8_t round_to_u8(double v);

Raster green_channel(const RgbRaster& img);
Histogram histogram(const Raster& img);
Raster median_filter(const Raster& img, int k);

RealRaster to_real(const Raster& img);
// Round half-up and clamp to [0,255].
Raster quantize(const RealRaster& img);
// Min-max stretch to [0,255] then quantize; a flat input maps to zeros.
Raster normalize_to_u8(const RealRaster& img);

struct Gradient {
    RealRaster gx;
    RealRaster gy;
    RealRaster magnitude;
};
Gradient sobel(const Raster& img);

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se);
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);
BinaryMask open(const BinaryMask& mask, const StructuringElement& se);
BinaryMask close(const BinaryMask& mask, const StructuringElement& se);

BinaryMask complement(const BinaryMask& mask);
BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);
std::size_t count(const BinaryMask& mask);
bool is_subset(const BinaryMask& a, const BinaryMask& b);
BinaryMask fill_holes(const BinaryMask& mask);
BinaryMask threshold_above(const Raster& img, int t);

// 8-connected labelling; labels follow the row-major position of each
// component's first pixel.
std::vector<ConnectedComponent> connected_components(const BinaryMask& mask);
BinaryMask component_mask(const ConnectedComponent& cc, int width, int height, int offset_x = 0,
                          int offset_y = 0);
BinaryMask largest_component(const BinaryMask& mask);

template <typename T, typename Tag>
Plane<T, Tag> crop(const Plane<T, Tag>& img, const BBox& box) {
    auto clipped = clip_bbox(box, img.width(), img.height());
    if (!clipped) throw Error("crop: bounding box does not intersect the image");
    Plane<T, Tag> out(clipped->width(), clipped->height());
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) out.at(x, y) = img.at(clipped->left + x, clipped->top + y);
    return out;
}

RgbRaster crop(const RgbRaster& img, const BBox& box);

}  // namespace fundus
