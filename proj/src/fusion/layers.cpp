#include "shipvl/fusion/layers.hpp"

#include "shipvl/error.hpp"

namespace shipvl::fusion {

Mat LinearView::effective_weight() const {
    if (!adapted()) return *weight;
    Mat w = *weight;
    w.noalias() += lora_scale * (*up) * (*down);
    return w;
}

Mat linear_forward(const LinearView& view, const Mat& x, LinearCache* cache) {
    const Mat& w0 = *view.weight;
    if (x.cols() != w0.cols()) fail(ErrorCode::ShapeMismatch, "linear input width does not match weight");

    Mat y;
    if (view.adapted()) {
        Mat w = view.effective_weight();
        y.noalias() = x * w.transpose();
        if (cache) {
            cache->xa.noalias() = x * view.down->transpose();
            cache->weight = std::move(w);
        }
    } else {
        y.noalias() = x * w0.transpose();
    }
    if (view.bias_scaled()) {
        y.rowwise() += view.bias->row(0);
        if (cache) cache->z = y;
        y.array().rowwise() *= view.scale->row(0).array();
    }
    if (cache) cache->x = x;
    return y;
}

Mat linear_backward(const LinearView& view, const LinearCache& cache, const Mat& dy, const LinearGrads& grads,
                    bool need_input_grad) {
    Mat dz;
    const Mat* dz_ptr = &dy;
    if (view.bias_scaled()) {
        if (grads.scale) grads.scale->row(0) += (dy.array() * cache.z.array()).colwise().sum().matrix();
        dz = dy;
        dz.array().rowwise() *= view.scale->row(0).array();
        if (grads.bias) grads.bias->row(0) += dz.colwise().sum();
        dz_ptr = &dz;
    }
    const Mat& g = *dz_ptr;
    if (view.adapted()) {
        // dL/dup = c * g^T (x down^T); dL/ddown = c * (g up)^T x
        if (grads.up) grads.up->noalias() += view.lora_scale * g.transpose() * cache.xa;
        if (grads.down) {
            const Mat gu = g * (*view.up);
            grads.down->noalias() += view.lora_scale * gu.transpose() * cache.x;
        }
    }
    if (!need_input_grad) return {};
    const Mat& w = view.adapted() ? cache.weight : *view.weight;
    Mat dx;
    dx.noalias() = g * w;
    return dx;
}

Vec BiasScaleLinear::forward(const Vec& x) const {
    const Mat row = x.transpose();
    return linear_forward(view(), row).row(0).transpose();
}

BiasScaleGrads bias_scale_backward(const BiasScaleLinear& layer, const Vec& x, const Vec& upstream) {
    LinearCache cache;
    const Mat row = x.transpose();
    linear_forward(layer.view(), row, &cache);
    Mat db = Mat::Zero(1, layer.bias.cols());
    Mat ds = Mat::Zero(1, layer.scale.cols());
    const Mat dy = upstream.transpose();
    const Mat dx = linear_backward(layer.view(), cache, dy, LinearGrads{nullptr, nullptr, &db, &ds});
    return {db.row(0).transpose(), ds.row(0).transpose(), dx.row(0).transpose()};
}

Mat rms_norm(const Mat& x, Vec* inv_rms) {
    const Vec r = ((x.array().square().rowwise().sum() / static_cast<double>(x.cols())) + kRmsEpsilon).rsqrt();
    Mat y = x;
    y.array().colwise() *= r.array();
    if (inv_rms) *inv_rms = r;
    return y;
}

Mat rms_norm_backward(const Mat& y, const Vec& inv_rms, const Mat& dy) {
    // dx = r * (dy - y * mean(dy ⊙ y))
    const Vec m = (dy.array() * y.array()).rowwise().sum() / static_cast<double>(y.cols());
    Mat dx = dy;
    dx.array() -= y.array().colwise() * m.array();
    dx.array().colwise() *= inv_rms.array();
    return dx;
}

}  // namespace shipvl::fusion
