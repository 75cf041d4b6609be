#include "shipvl/fusion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "shipvl/error.hpp"

namespace shipvl::fusion {

namespace {

constexpr char kMagic[8] = {'S', 'H', 'I', 'P', 'V', 'L', 'C', 'K'};

void put_le(std::string& out, std::uint64_t value, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& what) {
    fail(ErrorCode::FileFormatError, path.string() + ": " + what);
}

}  // namespace

void save_checkpoint(const ToyModel& model, const std::filesystem::path& path, const nlohmann::json& metadata) {
    nlohmann::ordered_json header;
    header["config"] = model.config().to_json();
    header["bias_scale"] = model.has_bias_scale();
    header["metadata"] = metadata;
    header["tensors"] = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const Parameter& p : model.parameters()) {
        header["tensors"].push_back({{"name", p.name},
                                     {"class", std::string(to_string(p.cls))},
                                     {"rows", p.value.rows()},
                                     {"cols", p.value.cols()},
                                     {"offset", offset}});
        offset += static_cast<std::uint64_t>(p.value.size()) * 8;
    }
    const std::string text = header.dump();

    std::string blob(kMagic, sizeof kMagic);
    put_le(blob, kCheckpointVersion, 4);
    put_le(blob, text.size(), 8);
    blob += text;
    blob.reserve(blob.size() + offset);
    for (const Parameter& p : model.parameters()) {
        for (Eigen::Index i = 0; i < p.value.size(); ++i) put_le(blob, std::bit_cast<std::uint64_t>(p.value.data()[i]), 8);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write checkpoint " + path.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) fail(ErrorCode::IoError, "failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open checkpoint " + path.string());
    const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    constexpr std::size_t fixed = sizeof kMagic + 4 + 8;
    if (blob.size() < fixed || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) bad(path, "not a checkpoint");
    const auto version = get_le(blob, sizeof kMagic, 4);
    if (version != kCheckpointVersion) bad(path, "unsupported version " + std::to_string(version));
    const auto header_len = get_le(blob, sizeof kMagic + 4, 8);
    if (header_len > blob.size() - fixed) bad(path, "truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(fixed, header_len));
    } catch (const nlohmann::json::exception& e) {
        bad(path, std::string("header is not JSON: ") + e.what());
    }
    const std::size_t payload = fixed + header_len;

    try {
        LoadedCheckpoint out{ToyModel(ToyModelConfig::from_json(header.at("config"))),
                             header.value("metadata", nlohmann::json::object())};
        if (header.at("bias_scale").get<bool>()) out.model.enable_bias_scale(0);
        const auto& tensors = header.at("tensors");
        if (tensors.size() != out.model.parameters().size()) bad(path, "tensor count does not match the config");
        for (const auto& t : tensors) {
            const auto name = t.at("name").get<std::string>();
            const auto index = out.model.find_parameter(name);
            if (!index) bad(path, "unexpected tensor '" + name + "'");
            Mat& value = out.model.parameters()[*index].value;
            if (t.at("rows").get<Eigen::Index>() != value.rows() || t.at("cols").get<Eigen::Index>() != value.cols()) {
                bad(path, "tensor '" + name + "' has the wrong shape");
            }
            const auto offset = t.at("offset").get<std::uint64_t>();
            const std::uint64_t bytes = static_cast<std::uint64_t>(value.size()) * 8;
            if (offset > blob.size() - payload || bytes > blob.size() - payload - offset) {
                bad(path, "tensor '" + name + "' runs past the end of the file");
            }
            for (Eigen::Index i = 0; i < value.size(); ++i) {
                value.data()[i] = std::bit_cast<double>(get_le(blob, payload + offset + 8 * static_cast<std::size_t>(i), 8));
            }
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        bad(path, std::string("malformed header: ") + e.what());
    }
}

}  // namespace shipvl::fusion
