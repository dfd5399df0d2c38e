#include "srkit/png_io.hpp"

#include <cstdio>
#include <cstring>

#include <png.h>

namespace srkit {

ImageU8 load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp)
        throw IoError("cannot open '" + path + "'");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png)
            png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("libpng init failed");
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("failed to decode PNG '" + path + "'");
    }

    png_init_io(png, fp);
    png_read_png(png, info,
                 PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_EXPAND |
                     PNG_TRANSFORM_GRAY_TO_RGB | PNG_TRANSFORM_PACKING,
                 nullptr);

    const int w = int(png_get_image_width(png, info));
    const int h = int(png_get_image_height(png, info));
    const int channels = int(png_get_channels(png, info));
    png_bytepp rows = png_get_rows(png, info);

    ImageU8 img(h, w);
    if (channels == 3) {
        for (int y = 0; y < h; ++y)
            std::memcpy(&img.data[size_t(int64_t(y) * w * 3)], rows[y], size_t(w) * 3);
    } else if (channels == 4) { // alpha survived on some odd color types
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = rows[y][x * 4 + c];
    } else {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("'" + path + "': unsupported channel count " + std::to_string(channels));
    }

    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void save_png(const ImageU8& img, const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp)
        throw IoError("cannot write '" + path + "'");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png)
            png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng init failed");
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("failed to encode PNG '" + path + "'");
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(img.w), png_uint_32(img.h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y)
        png_write_row(png, const_cast<png_bytep>(&img.data[size_t(int64_t(y) * img.w * 3)]));
    png_write_end(png, nullptr);

    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

} // namespace srkit
