#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shipvl/fusion/model.hpp"
#include "shipvl/image.hpp"

namespace shipvl::fusion {

struct Generation {
    std::string text;
    std::vector<std::string> warnings;
};

class AnswerGenerator {
public:
    virtual ~AnswerGenerator() = default;
    virtual Generation generate(const GrayImage& image, std::string_view image_id,
                                std::string_view instruction) const = 0;
};

// Greedy argmax decoding until <eos>, max_answer_len or max_seq (the latter two warn).
Generation decode_answer(const ToyModel& model, const GrayImage& image, std::string_view instruction);

class ModelGenerator final : public AnswerGenerator {
public:
    explicit ModelGenerator(const ToyModel& model) : model_(model) {}
    Generation generate(const GrayImage& image, std::string_view image_id, std::string_view instruction) const override;

private:
    const ToyModel& model_;
};

// Replays answers from a JSONL file of {"image"?: str, "instruction": str, "answer": str}.
// Entries with an image match that image id (the file stem) first; entries without
// one match any image carrying the instruction.
class ScriptedModel final : public AnswerGenerator {
public:
    static ScriptedModel load(const std::filesystem::path& jsonl);
    void add(std::string image, std::string instruction, std::string answer);

    Generation generate(const GrayImage& image, std::string_view image_id, std::string_view instruction) const override;
    std::size_t size() const noexcept { return by_image_.size() + by_instruction_.size(); }

private:
    std::map<std::pair<std::string, std::string>, std::string> by_image_;
    std::map<std::string, std::string> by_instruction_;
};

}  // namespace shipvl::fusion
