#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shipvl::fusion {

// Character-level vocabulary: four specials, space, digits, lowercase letters
// and the punctuation that appears in instructions and box answers.
// Input text is lowercased; characters outside the vocabulary map to <unk>.
class Tokenizer {
public:
    static const Tokenizer& standard();

    int size() const noexcept { return static_cast<int>(symbols_.size()); }
    int bos() const noexcept { return 0; }
    int sep() const noexcept { return 1; }
    int eos() const noexcept { return 2; }
    int unk() const noexcept { return 3; }

    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;  // specials are skipped
    const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }

private:
    Tokenizer();

    std::vector<std::string> symbols_;
    int lookup_[256];
};

}  // namespace shipvl::fusion
