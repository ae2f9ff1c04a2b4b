#include "dtf/png_io.hpp"

#include <png.h>

#include <bit>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "dtf/error.hpp"

namespace dtf {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw DataError("cannot open " + path.string());
    return f;
}

template <typename T>
void write_impl(const std::filesystem::path& path, const Raster<T>& img) {
    if (img.channels != 1 && img.channels != 3) throw InvalidArgument("png: only gray or RGB rasters");
    if (img.width < 1 || img.height < 1 || img.data.size() != std::size_t(img.width) * img.height * img.channels) {
        throw InvalidArgument("png: raster size mismatch");
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr f = open_file(path, "wb");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("png: failed to write " + path.string());
    }
    png_init_io(png, f.get());
    constexpr int depth = sizeof(T) * 8;
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), depth,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if constexpr (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    const std::size_t stride = std::size_t(img.width) * img.channels;
    for (int i = 0; i < img.height; ++i) {
        png_write_row(png, reinterpret_cast<png_const_bytep>(img.data.data() + stride * i));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(f.get()) != 0) throw DataError("png: failed to flush " + path.string());
}

template <typename T>
Raster<T> read_impl(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw DataError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("png: out of memory");
    }
    Raster<T> img;
    std::string failure;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("png: corrupt file " + path.string());
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    constexpr int want = sizeof(T) * 8;
    if (depth != want) {
        failure = path.string() + " has bit depth " + std::to_string(depth) + ", expected " + std::to_string(want);
    } else if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB) {
        failure = path.string() + " is neither gray nor RGB";
    } else if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
        failure = path.string() + " is interlaced";
    }
    if (!failure.empty()) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("png: " + failure);
    }
    if constexpr (want == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_read_update_info(png, info);
    img = Raster<T>(int(png_get_image_width(png, info)), int(png_get_image_height(png, info)),
                    color == PNG_COLOR_TYPE_GRAY ? 1 : 3);
    const std::size_t stride = std::size_t(img.width) * img.channels;
    for (int i = 0; i < img.height; ++i) {
        png_read_row(png, reinterpret_cast<png_bytep>(img.data.data() + stride * i), nullptr);
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Raster8& img) { write_impl(path, img); }
void write_png(const std::filesystem::path& path, const Raster16& img) { write_impl(path, img); }
Raster8 read_png8(const std::filesystem::path& path) { return read_impl<std::uint8_t>(path); }
Raster16 read_png16(const std::filesystem::path& path) { return read_impl<std::uint16_t>(path); }

}  // namespace dtf
