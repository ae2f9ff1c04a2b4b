#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dtf {

/// Interleaved raw PNG raster; `T` is std::uint8_t or std::uint16_t.
template <typename T>
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 1;  ///< 1 (gray) or 3 (RGB)
    std::vector<T> data;

    Raster() = default;
    Raster(int w, int h, int c) : width(w), height(h), channels(c), data(std::size_t(w) * h * c) {}
    T& at(int i, int j, int c = 0) { return data[(std::size_t(i) * width + j) * channels + c]; }
    T at(int i, int j, int c = 0) const { return data[(std::size_t(i) * width + j) * channels + c]; }
};

using Raster8 = Raster<std::uint8_t>;
using Raster16 = Raster<std::uint16_t>;

void write_png(const std::filesystem::path& path, const Raster8& img);
void write_png(const std::filesystem::path& path, const Raster16& img);

/// Reads an 8-bit gray or RGB PNG; other bit depths are rejected.
Raster8 read_png8(const std::filesystem::path& path);
/// Reads a 16-bit gray or RGB PNG; other bit depths are rejected.
Raster16 read_png16(const std::filesystem::path& path);

}  // namespace dtf
