#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "shipvl/fusion/model.hpp"

namespace shipvl::fusion {

enum class Stage { alignment, ship_adaption };

std::string_view to_string(Stage stage) noexcept;
Stage parse_stage(std::string_view text);  // accepts "alignment", "ship", "ship_adaption"

// Alignment: low-rank factors, projection and token embeddings.
// Ship adaption: the same plus every bias/scale vector.
ParamClassSet stage_trainable(Stage stage);

struct TrainConfig {
    int steps = 500;
    double learning_rate = 1e-2;
    double min_learning_rate = 0.0;  // cosine floor
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // decoupled; never applied to bias/scale vectors
    int batch_size = 0;         // 0 = full batch
    std::uint64_t seed = 0;     // mini-batch order and bias/scale initialization
    double smoothing = 0.9;     // EMA factor of the smoothed curve
    std::optional<ParamClassSet> trainable;  // overrides the stage default

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

double cosine_learning_rate(const TrainConfig& config, int step);

struct TrainResult {
    std::vector<double> losses;    // pre-update loss of each step
    std::vector<double> smoothed;  // EMA of losses
    double initial_loss = 0.0;
    double final_loss = 0.0;  // loss after the last update
    std::size_t trainable_parameters = 0;
};

using StepCallback = std::function<void(int step, double loss)>;

// Runs AdamW with cosine decay over `data`. Parameters outside the stage's
// trainable set are never written. Throws EmptyBatch or DivergenceDetected.
TrainResult train_stage(ToyModel& model, std::span<const TrainingExample> data, Stage stage,
                        const TrainConfig& config, const StepCallback& on_step = {});

}  // namespace shipvl::fusion
