#include "floodsr/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace floodsr {

namespace {

constexpr char kMagic[] = "FSRCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

nlohmann::ordered_json config_to_json(const NetConfig& c) {
    nlohmann::ordered_json j;
    j["features"] = c.features;
    j["blocks"] = c.blocks;
    j["layers"] = c.layers;
    j["growth"] = c.growth;
    j["kernel"] = c.kernel;
    j["attention"] = c.attention;
    j["reduction"] = c.reduction;
    j["upsample"] = c.upsample;
    return j;
}

NetConfig config_from_json(const nlohmann::json& j) {
    NetConfig c;
    c.features = j.at("features").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.layers = j.at("layers").get<int>();
    c.growth = j.at("growth").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.attention = j.at("attention").get<bool>();
    c.reduction = j.at("reduction").get<int>();
    c.upsample = j.at("upsample").get<std::vector<int>>();
    return c;
}

std::uint32_t le32(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    }
    return v;
}

}  // namespace

void save_checkpoint(const NetParams& params, const std::filesystem::path& path) {
    nlohmann::ordered_json header;
    header["config"] = config_to_json(params.config);
    header["init_seed"] = params.init_seed;
    header["train_seed"] = params.train_seed;
    auto tensors = nlohmann::ordered_json::array();
    for (const auto& t : params.tensors) {
        nlohmann::ordered_json e;
        e["name"] = t.name;
        e["shape"] = t.shape;
        tensors.push_back(std::move(e));
    }
    header["tensors"] = std::move(tensors);
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot create " + path.string());
    out.write(kMagic, kMagicLen);
    std::uint64_t len = text.size();
    unsigned char len_bytes[8];
    for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(len >> (8 * i));
    out.write(reinterpret_cast<const char*>(len_bytes), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : params.tensors) {
        std::vector<std::uint32_t> raw(t.values.size());
        for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = le32(std::bit_cast<std::uint32_t>(t.values[i]));
        out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    }
    if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

NetParams load_checkpoint(const std::filesystem::path& path, const std::optional<NetConfig>& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
    const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (bytes.size() < kMagicLen + 8 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
        fail(ErrorKind::MalformedHeader, "not a checkpoint: " + path.string());
    }
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) {
        len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[kMagicLen + i])) << (8 * i);
    }
    std::size_t pos = kMagicLen + 8;
    if (bytes.size() - pos < len) fail(ErrorKind::TruncatedPayload, "checkpoint header truncated");

    NetParams params;
    std::vector<std::pair<std::string, std::vector<int>>> entries;
    try {
        const auto header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
        params.config = config_from_json(header.at("config"));
        params.init_seed = header.at("init_seed").get<std::uint64_t>();
        params.train_seed = header.at("train_seed").get<std::uint64_t>();
        for (const auto& e : header.at("tensors")) {
            entries.emplace_back(e.at("name").get<std::string>(), e.at("shape").get<std::vector<int>>());
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedHeader, std::string("bad checkpoint header: ") + e.what());
    }
    pos += len;

    if (expected && !(*expected == params.config)) {
        fail(ErrorKind::ConfigMismatch, "checkpoint " + path.string() + " was built for a different network config");
    }

    for (auto& [name, shape] : entries) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        if (bytes.size() - pos < 4 * n) fail(ErrorKind::TruncatedPayload, "checkpoint tensor " + name + " truncated");
        std::vector<float> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t raw = 0;
            std::memcpy(&raw, bytes.data() + pos + 4 * i, 4);
            values[i] = std::bit_cast<float>(le32(raw));
            if (!std::isfinite(values[i])) fail(ErrorKind::NonFiniteValue, "non-finite weight in " + name);
        }
        pos += 4 * n;
        params.tensors.push_back({std::move(name), std::move(shape), std::move(values)});
    }

    // The stored tensors must be exactly what the stored config implies.
    const NetParams fresh = init_params(params.config, 0);
    if (fresh.tensors.size() != params.tensors.size()) {
        fail(ErrorKind::ConfigMismatch, "checkpoint tensors do not match its config");
    }
    for (std::size_t i = 0; i < fresh.tensors.size(); ++i) {
        if (fresh.tensors[i].name != params.tensors[i].name || fresh.tensors[i].shape != params.tensors[i].shape) {
            fail(ErrorKind::ConfigMismatch, "checkpoint tensor " + params.tensors[i].name + " does not match its config");
        }
    }
    return params;
}

}  // namespace floodsr
