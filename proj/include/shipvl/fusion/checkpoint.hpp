#pragma once

#include <filesystem>

#include <json.hpp>

#include "shipvl/fusion/model.hpp"

namespace shipvl::fusion {

// Layout, all integers little-endian:
//   8 bytes   magic "SHIPVLCK"
//   u32       format version
//   u64       header length N
//   N bytes   JSON header {"config", "bias_scale", "metadata", "tensors": [{name, class, rows, cols, offset}]}
//   payload   float64 row-major tensor data; offsets are in bytes from the payload start
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ToyModel& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
    ToyModel model;
    nlohmann::json metadata;
};

// Throws IoError when unreadable and FileFormatError on any layout problem.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace shipvl::fusion
