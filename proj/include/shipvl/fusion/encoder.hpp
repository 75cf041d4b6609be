#pragma once

#include <cstdint>
#include <vector>

#include "shipvl/fusion/tensor.hpp"
#include "shipvl/image.hpp"

namespace shipvl::fusion {

enum class Backbone { A, B };

struct FeatureTokens {
    Mat tokens;  // count x channels
    int scale_index = 0;
    Backbone backbone = Backbone::A;
};

// Frozen stand-in for a pretrained vision backbone: a seeded random projection
// of non-overlapping patches followed by tanh. Backbone A projects raw patch
// intensities; backbone B projects mean-removed patches (local contrast).
class EncoderStandIn {
public:
    EncoderStandIn(Backbone backbone, int patch, int channels, std::uint64_t seed);

    Backbone backbone() const noexcept { return backbone_; }
    int patch() const noexcept { return patch_; }
    int channels() const noexcept { return channels_; }
    const Mat& weights() const noexcept { return weights_; }

    // Tokens for one pyramid level, row-major over the patch grid.
    FeatureTokens encode(const GrayImage& level, int scale_index) const;

    // Pooled feature of a single patch-sized crop (used by the confidence scorer).
    Vec embed_patch(const GrayImage& patch_image) const;

private:
    Backbone backbone_;
    int patch_;
    int channels_;
    Mat weights_;  // (patch*patch) x channels
};

// Token count of pyramid level `scale` (level 0 = input) for a square input.
int patch_grid_tokens(int image_size, int patch, int scale);

// One FeatureTokens per pyramid level I_0..I_{scale_count-1}; level i+1 is a
// 2x mean-pooled copy of level i. The image is first resampled to image_size.
std::vector<FeatureTokens> encode_image_multiscale(const GrayImage& image, const EncoderStandIn& encoder,
                                                   int scale_count, int image_size);

// Token-axis concatenation across scales.
Mat concat_scales(const std::vector<FeatureTokens>& scales);

}  // namespace shipvl::fusion
