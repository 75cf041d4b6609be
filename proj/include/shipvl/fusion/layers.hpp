#pragma once

#include "shipvl/fusion/tensor.hpp"

namespace shipvl::fusion {

// Non-owning view of a frozen linear map y = x W^T with optional adapters:
//   low-rank:    W_eff = W + lora_scale * up * down
//   bias/scale:  y = scale ⊙ (x W_eff^T + bias)
// Vectors (bias, scale) are stored as 1 x out matrices.
struct LinearView {
    const Mat* weight = nullptr;  // out x in
    const Mat* down = nullptr;    // r x in
    const Mat* up = nullptr;      // out x r
    double lora_scale = 0.0;
    const Mat* bias = nullptr;
    const Mat* scale = nullptr;

    bool adapted() const noexcept { return down != nullptr && up != nullptr; }
    bool bias_scaled() const noexcept { return bias != nullptr && scale != nullptr; }
    Mat effective_weight() const;
};

struct LinearCache {
    Mat x;       // input rows
    Mat xa;      // x down^T (low-rank activations)
    Mat z;       // pre-scale output, kept only when bias_scaled
    Mat weight;  // effective weight, kept only when adapted
};

// Gradient sinks; null members are not computed.
struct LinearGrads {
    Mat* down = nullptr;
    Mat* up = nullptr;
    Mat* bias = nullptr;
    Mat* scale = nullptr;
};

Mat linear_forward(const LinearView& view, const Mat& x, LinearCache* cache = nullptr);

// Accumulates parameter gradients into `grads` and returns dL/dx.
Mat linear_backward(const LinearView& view, const LinearCache& cache, const Mat& dy, const LinearGrads& grads,
                    bool need_input_grad = true);

// Frozen base plus rank-r factors; `up` starts at zero so W_eff == W initially.
struct LoraLinear {
    Mat base;
    Mat down;
    Mat up;
    double alpha = 8.0;

    int rank() const noexcept { return static_cast<int>(down.rows()); }
    double scaling() const noexcept { return rank() > 0 ? alpha / rank() : 0.0; }
    LinearView view() const { return {&base, &down, &up, scaling(), nullptr, nullptr}; }
    Mat effective_weight() const { return view().effective_weight(); }
    Mat forward(const Mat& x) const { return linear_forward(view(), x); }
};

// f(x) = scale ⊙ (W x + bias) around a frozen W.
struct BiasScaleLinear {
    Mat base;   // out x in
    Mat bias;   // 1 x out
    Mat scale;  // 1 x out

    LinearView view() const { return {&base, nullptr, nullptr, 0.0, &bias, &scale}; }
    Vec forward(const Vec& x) const;
    Mat forward(const Mat& x) const { return linear_forward(view(), x); }
};

struct BiasScaleGrads {
    Vec bias;
    Vec scale;
    Vec input;
};

// Loss L = g · f(x) for an upstream gradient g.
BiasScaleGrads bias_scale_backward(const BiasScaleLinear& layer, const Vec& x, const Vec& upstream);

// Row-wise x / sqrt(mean(x^2) + eps); the inverse RMS per row is returned for backward.
Mat rms_norm(const Mat& x, Vec* inv_rms = nullptr);
Mat rms_norm_backward(const Mat& y, const Vec& inv_rms, const Mat& dy);

inline constexpr double kRmsEpsilon = 1e-6;

}  // namespace shipvl::fusion
