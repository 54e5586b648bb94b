#pragma once

// Weight container:
//   "CENH" | u16 version | u32 manifest bytes | manifest (UTF-8 JSON)
//   | f32 little-endian payload in manifest order | u32 CRC-32 of all preceding bytes
//
// The manifest holds {"config": {...}, "tensors": [{"name", "shape", "offset"}]}
// where offset is the byte offset of the tensor inside the payload.

#include <cstdint>
#include <filesystem>
#include <string>

#include "cenhdr/model.hpp"

namespace cenhdr {

inline constexpr std::uint16_t kWeightFormatVersion = 1;

struct LoadedModel {
    ModelWeights weights;
    ModelConfig config;
};

std::string config_to_json(const ModelConfig& config, int indent = -1);
/// Missing fields keep their defaults; unknown fields raise ConfigError.
ModelConfig config_from_json(const std::string& text);

std::string encode_weights(const ModelWeights& weights, const ModelConfig& config);
/// Errors: UnsupportedFormatError (magic), ChecksumError (truncation or
/// corruption), VersionError, CorruptHeaderError (manifest), ShapeMismatchError.
LoadedModel decode_weights(const std::string& bytes);

void save_weights(const ModelWeights& weights, const ModelConfig& config, const std::filesystem::path& path);
LoadedModel load_weights(const std::filesystem::path& path);

}  // namespace cenhdr
