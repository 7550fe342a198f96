#include "fundus/png_io.hpp"

#include <png.h>

#include <cstring>
#include <string>
#include <vector>

namespace fundus {

namespace {

// libpng's simplified API reports failures through png_image::message instead of longjmp.
struct Decoded {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};

Decoded decode(const std::filesystem::path& path, png_uint_32 format) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw Error("cannot read PNG " + path.string() + ": " + image.message);
    image.format = format;
    Decoded d;
    d.width = static_cast<int>(image.width);
    d.height = static_cast<int>(image.height);
    d.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, d.pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error("cannot decode PNG " + path.string() + ": " + msg);
    }
    return d;
}

void encode(const std::filesystem::path& path, int width, int height, png_uint_32 format,
            const std::vector<std::uint8_t>& data) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, data.data(), 0, nullptr))
        throw Error("cannot write PNG " + path.string() + ": " + image.message);
}

}  // namespace

RgbRaster read_png_rgb(const std::filesystem::path& path) {
    auto d = decode(path, PNG_FORMAT_RGB);
    RgbRaster img(d.width, d.height);
    for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
            const std::size_t i = (static_cast<std::size_t>(y) * d.width + x) * 3;
            img.r.at(x, y) = d.pixels[i];
            img.g.at(x, y) = d.pixels[i + 1];
            img.b.at(x, y) = d.pixels[i + 2];
        }
    }
    return img;
}

Raster read_png_gray(const std::filesystem::path& path) {
    auto d = decode(path, PNG_FORMAT_RGB);
    Raster img(d.width, d.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const int r = d.pixels[3 * i], g = d.pixels[3 * i + 1], b = d.pixels[3 * i + 2];
        // Exact for gray sources (r == g == b).
        img.data()[i] =
            (r == g && g == b) ? static_cast<std::uint8_t>(g) : round_to_u8(0.299 * r + 0.587 * g + 0.114 * b);
    }
    return img;
}

BinaryMask read_png_mask(const std::filesystem::path& path) {
    auto g = read_png_gray(path);
    BinaryMask m(g.width(), g.height());
    for (std::size_t i = 0; i < g.size(); ++i) m.data()[i] = g.data()[i] >= 128;
    return m;
}

void write_png(const std::filesystem::path& path, const Raster& img) {
    encode(path, img.width(), img.height(), PNG_FORMAT_GRAY,
           std::vector<std::uint8_t>(img.data().begin(), img.data().end()));
}

void write_png(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> data(mask.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = mask.data()[i] ? 255 : 0;
    encode(path, mask.width(), mask.height(), PNG_FORMAT_GRAY, data);
}

void write_png(const std::filesystem::path& path, const RgbRaster& img) {
    std::vector<std::uint8_t> data(img.g.size() * 3);
    for (std::size_t i = 0; i < img.g.size(); ++i) {
        data[3 * i] = img.r.data()[i];
        data[3 * i + 1] = img.g.data()[i];
        data[3 * i + 2] = img.b.data()[i];
    }
    encode(path, img.width(), img.height(), PNG_FORMAT_RGB, data);
}

}  // namespace fundus
