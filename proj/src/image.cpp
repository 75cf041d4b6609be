#include "shipvl/image.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "shipvl/error.hpp"

namespace shipvl {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

class PnmHeaderReader {
public:
    explicit PnmHeaderReader(const std::string& bytes) : bytes_(bytes) {}

    // Next whitespace-delimited decimal token, skipping '#' comments.
    long next_int() {
        skip_space_and_comments();
        long value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1L << 30) fail(ErrorCode::ImageDecodeError, "PNM header value too large");
            ++pos_;
            ++digits;
        }
        if (digits == 0) fail(ErrorCode::ImageDecodeError, "malformed PNM header");
        return value;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 2;
};

std::uint32_t be32(const unsigned char* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

std::optional<ImageSize> sniff_jpeg(const std::string& b) {
    std::size_t i = 2;
    while (i + 9 < b.size()) {
        if (static_cast<unsigned char>(b[i]) != 0xFF) return std::nullopt;
        const auto marker = static_cast<unsigned char>(b[i + 1]);
        if (marker == 0xFF) {
            ++i;
            continue;
        }
        const auto len = static_cast<std::size_t>((static_cast<unsigned char>(b[i + 2]) << 8) |
                                                  static_cast<unsigned char>(b[i + 3]));
        const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
        if (sof) {
            const int h = (static_cast<unsigned char>(b[i + 5]) << 8) | static_cast<unsigned char>(b[i + 6]);
            const int w = (static_cast<unsigned char>(b[i + 7]) << 8) | static_cast<unsigned char>(b[i + 8]);
            if (w > 0 && h > 0) return ImageSize{w, h};
            return std::nullopt;
        }
        i += 2 + len;
    }
    return std::nullopt;
}

}  // namespace

GrayImage::GrayImage(int width, int height, float fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) fail(ErrorCode::InvalidArgument, "negative image size");
    pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage decode_pnm(const std::string& bytes) {
    if (bytes.size() < 3 || bytes[0] != 'P' || bytes[1] < '2' || bytes[1] > '6' || bytes[1] == '4') {
        fail(ErrorCode::ImageDecodeError, "not a P2/P3/P5/P6 netpbm image");
    }
    const char kind = bytes[1];
    PnmHeaderReader header(bytes);
    const long w = header.next_int();
    const long h = header.next_int();
    const long maxval = header.next_int();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) fail(ErrorCode::ImageDecodeError, "bad PNM header");
    const int channels = (kind == '3' || kind == '6') ? 3 : 1;
    const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
    std::vector<double> samples(count);

    if (kind == '5' || kind == '6') {
        header.advance(1);  // single whitespace byte after maxval
        const std::size_t bps = maxval < 256 ? 1 : 2;
        if (header.pos() + count * bps > bytes.size()) fail(ErrorCode::ImageDecodeError, "truncated PNM raster");
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + header.pos());
        for (std::size_t i = 0; i < count; ++i) {
            samples[i] = bps == 1 ? p[i] : (p[2 * i] << 8 | p[2 * i + 1]);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) samples[i] = static_cast<double>(header.next_int());
    }

    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    auto& px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        double v = 0.0;
        if (channels == 1) {
            v = samples[i];
        } else {
            v = 0.299 * samples[3 * i] + 0.587 * samples[3 * i + 1] + 0.114 * samples[3 * i + 2];
        }
        px[i] = static_cast<float>(std::clamp(v / static_cast<double>(maxval), 0.0, 1.0));
    }
    return img;
}

GrayImage read_image(const fs::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pnm(bytes);
    fail(ErrorCode::ImageDecodeError, path.string() + ": only netpbm rasters can be decoded");
}

std::string encode_pgm(const GrayImage& image) {
    std::string out = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    out.reserve(out.size() + image.pixels().size());
    for (float v : image.pixels()) {
        const long q = std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
    }
    return out;
}

void write_pgm(const GrayImage& image, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    const std::string bytes = encode_pgm(image);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

std::optional<ImageSize> sniff_image_size(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::string head(65536, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    if (head.size() < 4) return std::nullopt;

    const auto* u = reinterpret_cast<const unsigned char*>(head.data());
    if (head.size() >= 24 && u[0] == 0x89 && head.compare(1, 3, "PNG") == 0) {
        const auto w = be32(u + 16);
        const auto h = be32(u + 20);
        if (w == 0 || h == 0 || w > (1u << 30) || h > (1u << 30)) return std::nullopt;
        return ImageSize{static_cast<int>(w), static_cast<int>(h)};
    }
    if (u[0] == 0xFF && u[1] == 0xD8) return sniff_jpeg(head);
    if (head[0] == 'P' && head[1] >= '1' && head[1] <= '6') {
        try {
            PnmHeaderReader header(head);
            const long w = header.next_int();
            const long h = header.next_int();
            if (w > 0 && h > 0) return ImageSize{static_cast<int>(w), static_cast<int>(h)};
        } catch (const Error&) {
        }
    }
    return std::nullopt;
}

std::optional<fs::path> find_image(const fs::path& dir, const std::string& stem) {
    for (const auto& ext : image_extensions()) {
        fs::path candidate = dir / (stem + ext);
        std::error_code ec;
        if (fs::is_regular_file(candidate, ec)) return candidate;
    }
    return std::nullopt;
}

GrayImage downsample2(const GrayImage& image) {
    const int w = image.width() / 2;
    const int h = image.height() / 2;
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out.at(x, y) = 0.25f * (image.at(2 * x, 2 * y) + image.at(2 * x + 1, 2 * y) + image.at(2 * x, 2 * y + 1) +
                                    image.at(2 * x + 1, 2 * y + 1));
        }
    }
    return out;
}

GrayImage resize_area(const GrayImage& image, int width, int height) {
    if (width <= 0 || height <= 0 || image.empty()) fail(ErrorCode::InvalidArgument, "resize to an empty image");
    if (width == image.width() && height == image.height()) return image;
    GrayImage out(width, height);
    const double sx = static_cast<double>(image.width()) / width;
    const double sy = static_cast<double>(image.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double y0 = y * sy;
        const double y1 = (y + 1) * sy;
        for (int x = 0; x < width; ++x) {
            const double x0 = x * sx;
            const double x1 = (x + 1) * sx;
            double acc = 0.0;
            double weight = 0.0;
            for (int iy = static_cast<int>(std::floor(y0)); iy < std::min(image.height(), static_cast<int>(std::ceil(y1))); ++iy) {
                const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                if (wy <= 0) continue;
                for (int ix = static_cast<int>(std::floor(x0)); ix < std::min(image.width(), static_cast<int>(std::ceil(x1))); ++ix) {
                    const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                    if (wx <= 0) continue;
                    acc += wx * wy * image.at(ix, iy);
                    weight += wx * wy;
                }
            }
            out.at(x, y) = static_cast<float>(weight > 0 ? acc / weight : 0.0);
        }
    }
    return out;
}

}  // namespace shipvl
