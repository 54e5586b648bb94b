#include "cenhdr/weights_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cenhdr {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'C', 'E', 'N', 'H'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 4;

template <typename U>
void put_le(std::string& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::string& in, std::size_t pos) {
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return value;
}

std::uint32_t crc32_of(const char* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for files above 4 GiB.
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

json config_json(const ModelConfig& c) {
    return json{
        {"encoder1_channels", c.encoder1_channels},
        {"encoder2_channels", c.encoder2_channels},
        {"merge_channels", c.merge_channels},
        {"scram_spatial_channels", c.scram_spatial_channels},
        {"scram_hidden", c.scram_hidden},
        {"scram_shared_across_frames", c.scram_shared_across_frames},
        {"conv_m1_shared", c.conv_m1_shared},
        {"upscale", c.upscale},
        {"gamma", c.gamma},
        {"attention", std::string(to_string(c.attention))},
    };
}

ModelConfig parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    ModelConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "encoder1_channels") c.encoder1_channels = value.get<int>();
            else if (key == "encoder2_channels") c.encoder2_channels = value.get<int>();
            else if (key == "merge_channels") c.merge_channels = value.get<int>();
            else if (key == "scram_spatial_channels") c.scram_spatial_channels = value.get<int>();
            else if (key == "scram_hidden") c.scram_hidden = value.get<std::array<int, 3>>();
            else if (key == "scram_shared_across_frames") c.scram_shared_across_frames = value.get<bool>();
            else if (key == "conv_m1_shared") c.conv_m1_shared = value.get<bool>();
            else if (key == "upscale") c.upscale = value.get<int>();
            else if (key == "gamma") c.gamma = value.get<double>();
            else if (key == "attention") c.attention = parse_attention_variant(value.get<std::string>());
            else throw ConfigError("unknown model config field '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& config, int indent) { return config_json(config).dump(indent); }

ModelConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

std::string encode_weights(const ModelWeights& weights, const ModelConfig& config) {
    validate_weights(weights, config);
    json tensors = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : weights) {
        const Shape& s = t.shape();
        tensors.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(t.numel()) * 4;
    }
    const std::string manifest = json{{"config", config_json(config)}, {"tensors", tensors}}.dump();

    std::string out(kMagic, 4);
    put_le<std::uint16_t>(out, kWeightFormatVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(manifest.size()));
    out += manifest;
    out.reserve(out.size() + offset + 4);
    for (const auto& [name, t] : weights)
        for (const float v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    put_le<std::uint32_t>(out, crc32_of(out.data(), out.size()));
    return out;
}

LoadedModel decode_weights(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw UnsupportedFormatError("not a weight container (missing CENH magic)");
    if (bytes.size() < kHeaderBytes + 4) throw ChecksumError("weight container truncated (" + std::to_string(bytes.size()) + " bytes)");
    const std::size_t body = bytes.size() - 4;
    const auto stored = get_le<std::uint32_t>(bytes, body);
    const auto actual = crc32_of(bytes.data(), body);
    if (stored != actual) throw ChecksumError("weight container checksum mismatch (file truncated or corrupted)");

    const auto version = get_le<std::uint16_t>(bytes, 4);
    if (version != kWeightFormatVersion)
        throw VersionError("unsupported weight container version " + std::to_string(version) + " (expected " + std::to_string(kWeightFormatVersion) + ")");
    const auto manifest_bytes = get_le<std::uint32_t>(bytes, 6);
    if (kHeaderBytes + manifest_bytes > body) throw CorruptHeaderError("manifest length exceeds file size");

    json manifest;
    try {
        manifest = json::parse(bytes.begin() + kHeaderBytes, bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes + manifest_bytes));
    } catch (const json::exception& e) {
        throw CorruptHeaderError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!manifest.contains("config") || !manifest.contains("tensors") || !manifest["tensors"].is_array())
        throw CorruptHeaderError("manifest lacks 'config' or 'tensors'");

    LoadedModel loaded;
    loaded.config = parse_config(manifest["config"]);
    const auto expected = parameter_shapes(loaded.config);
    const std::size_t payload_start = kHeaderBytes + manifest_bytes;
    const std::size_t payload_bytes = body - payload_start;

    std::uint64_t next_offset = 0;
    for (const auto& entry : manifest["tensors"]) {
        std::string name;
        std::vector<std::int64_t> dims;
        std::uint64_t offset = 0;
        try {
            name = entry.at("name").get<std::string>();
            dims = entry.at("shape").get<std::vector<std::int64_t>>();
            offset = entry.at("offset").get<std::uint64_t>();
        } catch (const json::exception& e) {
            throw CorruptHeaderError(std::string("bad manifest entry: ") + e.what());
        }
        Shape shape;
        try {
            shape = Shape::from_dims(dims);
        } catch (const DimensionError& e) {
            throw ShapeMismatchError("manifest shape of '" + name + "' is invalid: " + e.what());
        }
        const auto it = expected.find(name);
        if (it == expected.end()) throw ShapeMismatchError("manifest lists '" + name + "', which the embedded config does not define");
        if (it->second != shape) throw ShapeMismatchError("manifest shape " + shape.str() + " of '" + name + "' disagrees with config shape " + it->second.str());
        if (offset != next_offset) throw CorruptHeaderError("tensor '" + name + "' has offset " + std::to_string(offset) + ", expected " + std::to_string(next_offset));
        const std::uint64_t count = static_cast<std::uint64_t>(shape.numel());
        if (offset + count * 4 > payload_bytes) throw ShapeMismatchError("tensor '" + name + "' extends past the payload");

        Tensor t(shape);
        const std::size_t base = payload_start + offset;
        auto data = t.data();
        for (std::uint64_t i = 0; i < count; ++i) data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, base + 4 * i));
        if (!loaded.weights.emplace(name, std::move(t)).second) throw CorruptHeaderError("tensor '" + name + "' listed twice");
        next_offset = offset + count * 4;
    }
    if (next_offset != payload_bytes)
        throw ShapeMismatchError("payload holds " + std::to_string(payload_bytes) + " bytes but the manifest accounts for " + std::to_string(next_offset));
    for (const auto& [name, shape] : expected)
        if (!loaded.weights.contains(name)) throw ShapeMismatchError("manifest lacks '" + name + "' required by the embedded config");
    return loaded;
}

void save_weights(const ModelWeights& weights, const ModelConfig& config, const std::filesystem::path& path) {
    const std::string bytes = encode_weights(weights, config);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

LoadedModel load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return decode_weights(buffer.str());
}

}  // namespace cenhdr
