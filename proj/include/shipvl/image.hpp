#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace shipvl {

struct ImageSize {
    int width = 0;
    int height = 0;

    friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

// Single-channel image with intensities in [0, 1], row-major.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, float fill = 0.0f);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    ImageSize size() const noexcept { return {width_, height_}; }
    bool empty() const noexcept { return pixels_.empty(); }

    float& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    float at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

    const std::vector<float>& pixels() const noexcept { return pixels_; }
    std::vector<float>& pixels() noexcept { return pixels_; }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> pixels_;
};

// Netpbm decoding (P2, P3, P5, P6; colour is converted to luma). Throws ImageDecodeError.
GrayImage read_image(const std::filesystem::path& path);
GrayImage decode_pnm(const std::string& bytes);

// 8-bit binary PGM (P5).
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
std::string encode_pgm(const GrayImage& image);

// Reads only the header: PNM, PNG and baseline/progressive JPEG are recognised.
std::optional<ImageSize> sniff_image_size(const std::filesystem::path& path);

// Image files in a directory whose extension is one of the supported ones, keyed by stem.
inline const std::vector<std::string>& image_extensions() {
    static const std::vector<std::string> exts{".pgm", ".ppm", ".pnm", ".png", ".jpg", ".jpeg", ".tif", ".bmp"};
    return exts;
}
std::optional<std::filesystem::path> find_image(const std::filesystem::path& dir, const std::string& stem);

// 2x2 mean pooling; odd trailing rows/columns are dropped.
GrayImage downsample2(const GrayImage& image);

// Area-averaging resample to an exact size.
GrayImage resize_area(const GrayImage& image, int width, int height);

}  // namespace shipvl
