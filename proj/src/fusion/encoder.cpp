#include "shipvl/fusion/encoder.hpp"

#include <cmath>

#include "shipvl/error.hpp"
#include "shipvl/rng.hpp"

namespace shipvl::fusion {

EncoderStandIn::EncoderStandIn(Backbone backbone, int patch, int channels, std::uint64_t seed)
    : backbone_(backbone), patch_(patch), channels_(channels) {
    if (patch <= 0 || channels <= 0) fail(ErrorCode::InvalidArgument, "encoder needs positive patch and channels");
    Rng rng(seed);
    weights_.resize(patch * patch, channels);
    const double stddev = 1.0 / patch;
    for (Eigen::Index i = 0; i < weights_.size(); ++i) weights_.data()[i] = rng.normal(0.0, stddev);
}

FeatureTokens EncoderStandIn::encode(const GrayImage& level, int scale_index) const {
    const int gw = level.width() / patch_;
    const int gh = level.height() / patch_;
    if (gw <= 0 || gh <= 0) {
        fail(ErrorCode::ShapeMismatch, "pyramid level " + std::to_string(scale_index) + " is smaller than one patch");
    }
    Mat patches(gw * gh, patch_ * patch_);
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            auto row = patches.row(py * gw + px);
            for (int y = 0; y < patch_; ++y) {
                for (int x = 0; x < patch_; ++x) row(y * patch_ + x) = level.at(px * patch_ + x, py * patch_ + y);
            }
            if (backbone_ == Backbone::B) row.array() -= row.mean();
        }
    }
    FeatureTokens out;
    out.tokens = (patches * weights_).array().tanh().matrix();
    out.scale_index = scale_index;
    out.backbone = backbone_;
    return out;
}

Vec EncoderStandIn::embed_patch(const GrayImage& patch_image) const {
    const GrayImage crop = resize_area(patch_image, patch_, patch_);
    return encode(crop, 0).tokens.row(0).transpose();
}

int patch_grid_tokens(int image_size, int patch, int scale) {
    int side = image_size;
    for (int i = 0; i < scale; ++i) side /= 2;
    const int g = side / patch;
    return g * g;
}

std::vector<FeatureTokens> encode_image_multiscale(const GrayImage& image, const EncoderStandIn& encoder,
                                                   int scale_count, int image_size) {
    if (scale_count < 1) fail(ErrorCode::InvalidArgument, "scale_count must be at least 1");
    if (image.empty()) fail(ErrorCode::ImageDecodeError, "empty image");
    std::vector<FeatureTokens> out;
    GrayImage level = resize_area(image, image_size, image_size);
    for (int s = 0; s < scale_count; ++s) {
        if (s > 0) level = downsample2(level);
        out.push_back(encoder.encode(level, s));
    }
    return out;
}

Mat concat_scales(const std::vector<FeatureTokens>& scales) {
    Eigen::Index rows = 0;
    const Eigen::Index cols = scales.empty() ? 0 : scales.front().tokens.cols();
    for (const auto& s : scales) {
        if (s.tokens.cols() != cols) fail(ErrorCode::ShapeMismatch, "scales disagree on channel count");
        rows += s.tokens.rows();
    }
    Mat out(rows, cols);
    Eigen::Index r = 0;
    for (const auto& s : scales) {
        out.middleRows(r, s.tokens.rows()) = s.tokens;
        r += s.tokens.rows();
    }
    return out;
}

}  // namespace shipvl::fusion
