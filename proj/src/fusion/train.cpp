#include "shipvl/fusion/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "shipvl/error.hpp"
#include "shipvl/rng.hpp"

namespace shipvl::fusion {

std::string_view to_string(Stage stage) noexcept {
    return stage == Stage::alignment ? "alignment" : "ship_adaption";
}

Stage parse_stage(std::string_view text) {
    if (text == "alignment") return Stage::alignment;
    if (text == "ship" || text == "ship_adaption") return Stage::ship_adaption;
    fail(ErrorCode::InvalidArgument, "unknown stage '" + std::string(text) + "'");
}

ParamClassSet stage_trainable(Stage stage) {
    ParamClassSet set{ParamClass::lora_down, ParamClass::lora_up, ParamClass::projection, ParamClass::embedding};
    if (stage == Stage::ship_adaption) {
        set.insert(ParamClass::bias);
        set.insert(ParamClass::scale);
    }
    return set;
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j = {
        {"steps", steps},
        {"learning_rate", learning_rate},
        {"min_learning_rate", min_learning_rate},
        {"beta1", beta1},
        {"beta2", beta2},
        {"epsilon", epsilon},
        {"weight_decay", weight_decay},
        {"batch_size", batch_size},
        {"seed", seed},
        {"smoothing", smoothing},
    };
    if (trainable) {
        nlohmann::json classes = nlohmann::json::array();
        for (ParamClass c : *trainable) classes.push_back(std::string(to_string(c)));
        j["trainable"] = classes;
    }
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (!j.is_object()) fail(ErrorCode::FormatError, "train config must be a JSON object");
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    try {
        get("steps", c.steps);
        get("learning_rate", c.learning_rate);
        get("min_learning_rate", c.min_learning_rate);
        get("beta1", c.beta1);
        get("beta2", c.beta2);
        get("epsilon", c.epsilon);
        get("weight_decay", c.weight_decay);
        get("batch_size", c.batch_size);
        get("seed", c.seed);
        get("smoothing", c.smoothing);
        if (j.contains("trainable")) {
            ParamClassSet set;
            for (const auto& name : j.at("trainable")) set.insert(parse_param_class(name.get<std::string>()));
            c.trainable = set;
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::FormatError, std::string("train config: ") + e.what());
    }
    if (c.steps < 0 || c.learning_rate < 0.0 || c.batch_size < 0) {
        fail(ErrorCode::InvalidArgument, "train config values must be non-negative");
    }
    return c;
}

double cosine_learning_rate(const TrainConfig& config, int step) {
    if (config.steps <= 0) return config.learning_rate;
    const double t = std::clamp(static_cast<double>(step) / config.steps, 0.0, 1.0);
    return config.min_learning_rate +
           0.5 * (config.learning_rate - config.min_learning_rate) * (1.0 + std::cos(std::numbers::pi * t));
}

TrainResult train_stage(ToyModel& model, std::span<const TrainingExample> data, Stage stage,
                        const TrainConfig& config, const StepCallback& on_step) {
    if (data.empty()) fail(ErrorCode::EmptyBatch, "training set is empty");
    if (stage == Stage::ship_adaption) model.enable_bias_scale(config.seed);
    const ParamClassSet trainable = config.trainable.value_or(stage_trainable(stage));

    auto& params = model.parameters();
    std::vector<Mat> m(params.size()), v(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!trainable.count(params[i].cls)) continue;
        m[i] = Mat::Zero(params[i].value.rows(), params[i].value.cols());
        v[i] = m[i];
    }

    TrainResult result;
    result.trainable_parameters = model.parameter_count(trainable);
    const std::size_t batch = config.batch_size > 0 ? std::min<std::size_t>(config.batch_size, data.size()) : data.size();
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(config.seed);
    std::size_t cursor = data.size();
    std::vector<TrainingExample> mini;

    auto check = [](double loss, int step) {
        if (!std::isfinite(loss)) {
            fail(ErrorCode::DivergenceDetected, "loss became non-finite at step " + std::to_string(step));
        }
    };

    double ema = 0.0;
    Gradients grads;
    for (int step = 0; step < config.steps; ++step) {
        double loss = 0.0;
        if (batch == data.size()) {
            loss = model.loss_and_grads(data, trainable, &grads);
        } else {
            mini.clear();
            for (std::size_t k = 0; k < batch; ++k) {
                if (cursor == data.size()) {
                    for (std::size_t i = order.size(); i > 1; --i) {
                        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
                    }
                    cursor = 0;
                }
                mini.push_back(data[order[cursor++]]);
            }
            loss = model.loss_and_grads(mini, trainable, &grads);
        }
        check(loss, step);
        if (step == 0) {
            result.initial_loss = loss;
            ema = loss;
        }
        ema = config.smoothing * ema + (1.0 - config.smoothing) * loss;
        result.losses.push_back(loss);
        result.smoothed.push_back(ema);

        const double lr = cosine_learning_rate(config, step);
        const double bc1 = 1.0 - std::pow(config.beta1, step + 1);
        const double bc2 = 1.0 - std::pow(config.beta2, step + 1);
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!grads.has(i)) continue;
            const Mat& g = grads.values[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g.cwiseProduct(g);
            Mat& p = params[i].value;
            const bool decay = params[i].cls != ParamClass::bias && params[i].cls != ParamClass::scale;
            if (decay && config.weight_decay > 0.0) p *= 1.0 - lr * config.weight_decay;
            p.array() -= lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + config.epsilon);
        }
        if (on_step) on_step(step, loss);
    }
    result.final_loss = model.loss(data);
    check(result.final_loss, config.steps);
    if (config.steps == 0) result.initial_loss = result.final_loss;
    return result;
}

}  // namespace shipvl::fusion
