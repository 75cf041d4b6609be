#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "shipvl/fusion/model.hpp"
#include "shipvl/labeling.hpp"
#include "shipvl/synthetic.hpp"
#include "support/oracles.hpp"

namespace gradcheck {

// D=32, two adapted layers, small images: cheap enough to probe every class.
inline shipvl::fusion::ToyModelConfig small_config() {
    shipvl::fusion::ToyModelConfig c;
    c.model_dim = 32;
    c.heads = 4;
    c.total_layers = 2;
    c.lora_layers = 2;
    c.encoder_channels = 8;
    c.image_size = 16;
    c.patch = 4;
    c.max_seq = 64;
    return c;
}

// Adapters and bias vectors start at zero, which hides whole terms of the
// gradient; give them random values so every path is exercised.
inline void perturb_adapters(shipvl::fusion::ToyModel& model, std::uint64_t seed) {
    using shipvl::fusion::ParamClass;
    shipvl::Rng rng(seed);
    for (auto& p : model.parameters()) {
        if (p.cls != ParamClass::lora_up && p.cls != ParamClass::bias) continue;
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.normal(0.0, 0.1);
    }
}

inline std::vector<shipvl::fusion::TrainingExample> small_batch(const shipvl::fusion::ToyModel& model) {
    shipvl::SyntheticDatasetOptions o;
    o.count = 2;
    o.seed = 3;
    o.scene.size = 16;
    o.scene.min_extent = 4;
    std::vector<shipvl::fusion::TrainingExample> batch;
    for (const auto& s : shipvl::make_synthetic_samples(o)) {
        batch.push_back(model.make_example(s.scene.image, "detect ships.",
                                           shipvl::serialize_answer(std::span<const shipvl::HBox>(s.scene.boxes))));
    }
    return batch;
}

struct ClassReport {
    double worst = 0.0;
    int probes = 0;
};

// Central differences (step h) on up to `per_param` coordinates of every parameter
// in a trainable class; worst relative error per class.
inline std::map<std::string, ClassReport> run(shipvl::fusion::ToyModel& model,
                                              const std::vector<shipvl::fusion::TrainingExample>& batch,
                                              int per_param = 6, double h = 1e-4) {
    using namespace shipvl::fusion;
    const ParamClassSet classes = all_trainable_classes();
    Gradients g;
    model.loss_and_grads(batch, classes, &g);
    const auto f = [&] { return model.loss(batch); };
    std::map<std::string, ClassReport> out;
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        if (!g.has(i)) continue;
        auto& p = model.parameters()[i];
        auto& rep = out[std::string(to_string(p.cls))];
        const Eigen::Index n = p.value.size();
        for (int k = 0; k < std::min<Eigen::Index>(n, per_param); ++k) {
            const Eigen::Index idx = (static_cast<Eigen::Index>(k) * 7919) % n;
            const double numeric = oracle::central_difference(f, p.value.data()[idx], h);
            rep.worst = std::max(rep.worst, oracle::relative_error(numeric, g.values[i].data()[idx]));
            ++rep.probes;
        }
    }
    return out;
}

}  // namespace gradcheck
