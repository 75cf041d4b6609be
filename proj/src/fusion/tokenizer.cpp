#include "shipvl/fusion/tokenizer.hpp"

#include <cctype>

namespace shipvl::fusion {

Tokenizer::Tokenizer() {
    symbols_ = {"<bos>", "<sep>", "<eos>", "<unk>"};
    const std::string chars = " 0123456789abcdefghijklmnopqrstuvwxyz.,;:[]!?-'()/";
    for (int i = 0; i < 256; ++i) lookup_[i] = unk();
    for (char c : chars) {
        lookup_[static_cast<unsigned char>(c)] = static_cast<int>(symbols_.size());
        symbols_.emplace_back(1, c);
    }
}

const Tokenizer& Tokenizer::standard() {
    static const Tokenizer instance;
    return instance;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) {
        if (c >= 0x80 && (c & 0xC0) == 0x80) continue;  // UTF-8 continuation byte: one <unk> per code point
        ids.push_back(lookup_[std::tolower(c)]);
    }
    return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 4 || id >= size()) continue;
        out += symbols_[static_cast<std::size_t>(id)];
    }
    return out;
}

}  // namespace shipvl::fusion
