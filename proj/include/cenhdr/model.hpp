#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cenhdr/autodiff.hpp"
#include "cenhdr/optim.hpp"
#include "cenhdr/tensor.hpp"

namespace cenhdr {

/// Attention used to register the non-reference features.
enum class AttentionVariant {
    scram,               // spatial + channel branches
    scram_spatial_only,  // SCRAM-S
    scram_channel_only,  // SCRAM-C
    ahdrnet_like,        // conv3x3 -> relu -> conv3x3 -> sigmoid
    none,                // features pass through unweighted
};

std::string_view to_string(AttentionVariant v);
AttentionVariant parse_attention_variant(std::string_view text);

struct ModelConfig {
    int encoder1_channels = 16;
    int encoder2_channels = 32;
    int merge_channels = 64;
    int scram_spatial_channels = 21;
    std::array<int, 3> scram_hidden{120, 120, 120};
    bool scram_shared_across_frames = false;
    bool conv_m1_shared = true;
    int upscale = 2;
    double gamma = 2.2;
    AttentionVariant attention = AttentionVariant::scram;

    /// Throws ConfigError when widths are non-positive or inconsistent.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using ModelWeights = ParamMap<float>;

/// Shapes of every tensor the configuration requires, keyed by name
/// ("conv_E1.weight", "scram.1.spatial.reduce.bias", ...).
std::map<std::string, Shape> parameter_shapes(const ModelConfig& config);

/// Kaiming-uniform (fan-in) weights and zero biases, deterministic in `seed`.
ModelWeights build_model(const ModelConfig& config, std::uint64_t seed);

/// Total number of scalars held by `weights`.
std::int64_t count_elements(const ModelWeights& weights);

/// Checks that `weights` holds exactly the tensors `config` requires.
/// Missing or extra names raise ConfigError, wrong shapes ShapeMismatchError.
template <typename T>
void validate_weights(const ParamMap<T>& weights, const ModelConfig& config);

/// Name prefix of the attention module applied to `frame` (1 or 3).
std::string attention_prefix(const ModelConfig& config, int frame);
/// Name prefix of conv_M1 for `frame` (1, 2 or 3).
std::string merge_conv_prefix(const ModelConfig& config, int frame);

// Stage functions. Frames are numbered 1..3, frame 2 is the reference.

template <typename T>
struct Encoded {
    BasicTensor<T> skip;      // conv_E1 output, full resolution
    BasicTensor<T> features;  // conv_E2 output, half resolution
};

template <typename T>
Encoded<T> encode(const BasicTensor<T>& ldr, const ParamMap<T>& weights, const ModelConfig& config);

/// Attention map for non-reference `frame` computed from its features and the
/// reference features. Values lie in (0, 1).
template <typename T>
BasicTensor<T> scram(const BasicTensor<T>& features, const BasicTensor<T>& reference, const ParamMap<T>& weights, const ModelConfig& config, int frame);

template <typename T>
BasicTensor<T> apply_attention(const BasicTensor<T>& features, const BasicTensor<T>& attention);

template <typename T>
BasicTensor<T> merge(const std::array<BasicTensor<T>, 3>& aligned, const ParamMap<T>& weights, const ModelConfig& config);

template <typename T>
BasicTensor<T> decode(const BasicTensor<T>& merged, const BasicTensor<T>& reference_skip, const ParamMap<T>& weights, const ModelConfig& config);

/// Intermediate shapes of the last forward pass (batch axis included).
struct ForwardTrace {
    Shape reference_skip;
    std::array<Shape, 3> features;
    std::array<Shape, 3> aligned;
    Shape merged;
    Shape decoded;
    Shape output;
};

/// Full network: three (n, 6, H, W) inputs -> (n, 3, H, W) HDR in (0, 1).
template <typename T>
BasicTensor<T> forward(const std::array<BasicTensor<T>, 3>& inputs, const ParamMap<T>& weights, const ModelConfig& config, ForwardTrace* trace = nullptr);

/// Same network recorded on `tape`. Every weight is registered as a tape
/// parameter under its own name; the inputs become constants.
template <typename T>
ad::Var<T> forward(ad::Tape<T>& tape, const std::array<BasicTensor<T>, 3>& inputs, const ParamMap<T>& weights, const ModelConfig& config);

}  // namespace cenhdr
