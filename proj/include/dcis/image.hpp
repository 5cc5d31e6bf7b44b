#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dcis {

// Interleaved 8-bit RGB raster.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // height * width * 3

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    static Image filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    std::uint8_t& at(int x, int y, int c) {
        return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    std::size_t byte_size() const { return rgb.size(); }

    bool operator==(const Image&) const = default;
};

// A pre-exported region raster with known physical resolution (microns/pixel).
struct RegionImage {
    Image image;
    double mpp = 0.0;
};

Image load_png(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);

// Mirror an out-of-range coordinate back into [0, n).
int reflect_index(int i, int n);

// dst(x, y) samples src at (m[0]x + m[1]y + m[2], m[3]x + m[4]y + m[5]),
// bilinear, reflecting at the borders. dst must be pre-sized.
void warp_affine_bilinear(const Image& src, Image& dst, const double m[6]);

// Uniform rescale by `scale` (output dims rounded to nearest), bilinear.
Image resample_bilinear(const Image& src, double scale);

}  // namespace dcis
