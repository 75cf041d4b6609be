#include "shipvl/fusion/generator.hpp"

#include <fstream>

#include <json.hpp>

#include "shipvl/error.hpp"
#include "shipvl/fusion/tokenizer.hpp"

namespace shipvl::fusion {

Generation decode_answer(const ToyModel& model, const GrayImage& image, std::string_view instruction) {
    const Tokenizer& tok = Tokenizer::standard();
    const VisualFeatures visual = model.encode(image);
    std::vector<int> ids{tok.bos()};
    const auto instr = tok.encode(instruction);
    ids.insert(ids.end(), instr.begin(), instr.end());
    ids.push_back(tok.sep());
    const std::size_t prompt = ids.size();
    const std::size_t room = static_cast<std::size_t>(model.config().max_seq - model.config().visual_tokens());

    Generation out;
    if (prompt > room) {
        out.warnings.push_back("instruction does not fit in max_seq; nothing decoded");
        return out;
    }
    for (;;) {
        const std::size_t produced = ids.size() - prompt;
        if (produced >= static_cast<std::size_t>(model.config().max_answer_len)) {
            out.warnings.push_back("answer truncated at max_answer_len");
            break;
        }
        if (ids.size() >= room) {
            out.warnings.push_back("answer truncated at max_seq");
            break;
        }
        const Mat logits = model.forward(visual, ids);
        Eigen::Index next = 0;
        logits.row(logits.rows() - 1).maxCoeff(&next);
        if (static_cast<int>(next) == tok.eos()) break;
        ids.push_back(static_cast<int>(next));
    }
    out.text = tok.decode(std::span<const int>(ids).subspan(prompt));
    return out;
}

Generation ModelGenerator::generate(const GrayImage& image, std::string_view, std::string_view instruction) const {
    return decode_answer(model_, image, instruction);
}

ScriptedModel ScriptedModel::load(const std::filesystem::path& jsonl) {
    std::ifstream in(jsonl);
    if (!in) fail(ErrorCode::IoError, "cannot open scripted model " + jsonl.string());
    ScriptedModel model;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            model.add(j.value("image", std::string()), j.at("instruction").get<std::string>(),
                      j.at("answer").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::FileFormatError, jsonl.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return model;
}

void ScriptedModel::add(std::string image, std::string instruction, std::string answer) {
    if (image.empty()) {
        by_instruction_[std::move(instruction)] = std::move(answer);
    } else {
        // Keyed by stem so "a.png" and "a" address the same image.
        by_image_[{std::filesystem::path(image).stem().string(), std::move(instruction)}] = std::move(answer);
    }
}

Generation ScriptedModel::generate(const GrayImage&, std::string_view image_id, std::string_view instruction) const {
    const std::string instr(instruction);
    if (auto it = by_image_.find({std::string(image_id), instr}); it != by_image_.end()) return {it->second, {}};
    if (auto it = by_instruction_.find(instr); it != by_instruction_.end()) return {it->second, {}};
    return {"", {"no scripted answer for image '" + std::string(image_id) + "'"}};
}

}  // namespace shipvl::fusion
