#include "dcis/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "dcis/errors.hpp"

namespace dcis {

Image Image::filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image img(w, h);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = r;
        img.rgb[i + 1] = g;
        img.rgb[i + 2] = b;
    }
    return img;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw PipelineError("cannot open image file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw PipelineError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw PipelineError("png_create_info_struct failed");
    }

    Image img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw PipelineError("failed to decode PNG: " + path.string());
    }

    png_init_io(png, file.get());
    png_read_info(png, info);

    // Normalize to 8-bit RGB regardless of the on-disk layout.
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);

    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const Image& image, const std::filesystem::path& path) {
    if (image.width <= 0 || image.height <= 0)
        throw ValidationError("save_png: empty image");
    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw PipelineError("cannot open file for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw PipelineError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw PipelineError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw PipelineError("failed to encode PNG: " + path.string());
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y)
        png_write_row(png, const_cast<png_bytep>(image.rgb.data() +
                                                 static_cast<std::size_t>(y) * image.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

namespace {

// Bilinear fetch at a continuous coordinate, reflected borders.
inline void sample_bilinear(const Image& src, double sx, double sy, std::uint8_t out[3]) {
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0;
    const double fy = sy - y0;
    const int xa = reflect_index(x0, src.width);
    const int xb = reflect_index(x0 + 1, src.width);
    const int ya = reflect_index(y0, src.height);
    const int yb = reflect_index(y0 + 1, src.height);
    const double w00 = (1.0 - fx) * (1.0 - fy);
    const double w10 = fx * (1.0 - fy);
    const double w01 = (1.0 - fx) * fy;
    const double w11 = fx * fy;
    for (int c = 0; c < 3; ++c) {
        const double v = w00 * src.at(xa, ya, c) + w10 * src.at(xb, ya, c) +
                         w01 * src.at(xa, yb, c) + w11 * src.at(xb, yb, c);
        const long q = std::lround(v);
        out[c] = static_cast<std::uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
    }
}

}  // namespace

void warp_affine_bilinear(const Image& src, Image& dst, const double m[6]) {
    if (src.width <= 0 || src.height <= 0) throw ValidationError("warp: empty source image");
    std::uint8_t px[3];
    for (int y = 0; y < dst.height; ++y) {
        for (int x = 0; x < dst.width; ++x) {
            const double sx = m[0] * x + m[1] * y + m[2];
            const double sy = m[3] * x + m[4] * y + m[5];
            sample_bilinear(src, sx, sy, px);
            dst.at(x, y, 0) = px[0];
            dst.at(x, y, 1) = px[1];
            dst.at(x, y, 2) = px[2];
        }
    }
}

Image resample_bilinear(const Image& src, double scale) {
    if (!(scale > 0.0)) throw ValidationError("resample: scale must be positive");
    const int w2 = std::max(1, static_cast<int>(std::llround(src.width * scale)));
    const int h2 = std::max(1, static_cast<int>(std::llround(src.height * scale)));
    Image dst(w2, h2);
    const double inv_x = static_cast<double>(src.width) / w2;
    const double inv_y = static_cast<double>(src.height) / h2;
    std::uint8_t px[3];
    for (int y = 0; y < h2; ++y) {
        const double sy = (y + 0.5) * inv_y - 0.5;
        for (int x = 0; x < w2; ++x) {
            const double sx = (x + 0.5) * inv_x - 0.5;
            sample_bilinear(src, sx, sy, px);
            dst.at(x, y, 0) = px[0];
            dst.at(x, y, 1) = px[1];
            dst.at(x, y, 2) = px[2];
        }
    }
    return dst;
}

}  // namespace dcis
