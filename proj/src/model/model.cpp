#include "cenhdr/model.hpp"

#include <cmath>
#include <random>

#include "graph.hpp"

namespace cenhdr {

namespace {

constexpr std::array<std::pair<AttentionVariant, std::string_view>, 5> kVariantNames{{
    {AttentionVariant::scram, "scram"},
    {AttentionVariant::scram_spatial_only, "scram_spatial_only"},
    {AttentionVariant::scram_channel_only, "scram_channel_only"},
    {AttentionVariant::ahdrnet_like, "ahdrnet_like"},
    {AttentionVariant::none, "none"},
}};

void add_conv(std::map<std::string, Shape>& shapes, const std::string& name, int c_in, int c_out, int k) {
    shapes[name + ".weight"] = {c_out, c_in, k, k};
    shapes[name + ".bias"] = {1, c_out, 1, 1};
}

void add_linear(std::map<std::string, Shape>& shapes, const std::string& name, int c_in, int c_out) {
    shapes[name + ".weight"] = {c_out, c_in, 1, 1};
    shapes[name + ".bias"] = {1, c_out, 1, 1};
}

constexpr std::array<int, 2> kNonReference{1, 3};

void require_inputs(const Shape& s, const char* op) {
    if (s.c != 6) throw DimensionError(op, "channels", "expected 6 input channels (LDR + gamma projection), got " + std::to_string(s.c));
    if (s.h % 2 != 0 || s.w % 2 != 0)
        throw DimensionError(op, s.h % 2 != 0 ? "height" : "width",
                             "spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) + " must be even; pad the inputs first (assemble_inputs does this)");
}

}  // namespace

std::string_view to_string(AttentionVariant v) {
    for (const auto& [variant, name] : kVariantNames)
        if (variant == v) return name;
    return "unknown";
}

AttentionVariant parse_attention_variant(std::string_view text) {
    for (const auto& [variant, name] : kVariantNames)
        if (name == text) return variant;
    throw ConfigError("unknown attention variant '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
    auto positive = [](int v, const char* what) {
        if (v < 1) throw ConfigError(std::string(what) + " must be >= 1, got " + std::to_string(v));
    };
    positive(encoder1_channels, "encoder1_channels");
    positive(encoder2_channels, "encoder2_channels");
    positive(merge_channels, "merge_channels");
    positive(scram_spatial_channels, "scram_spatial_channels");
    for (const int h : scram_hidden) positive(h, "scram_hidden");
    if (upscale != 2) throw ConfigError("upscale must be 2 to undo the stride-2 encoder, got " + std::to_string(upscale));
    if (merge_channels != encoder1_channels * upscale * upscale)
        throw ConfigError("merge_channels (" + std::to_string(merge_channels) + ") must equal encoder1_channels * upscale^2 (" +
                          std::to_string(encoder1_channels * upscale * upscale) + ") for the reference skip");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be a positive finite number");
}

std::string attention_prefix(const ModelConfig& config, int frame) {
    const std::string root = config.attention == AttentionVariant::ahdrnet_like ? "ahdr" : "scram";
    return root + "." + (config.scram_shared_across_frames ? std::string("shared") : std::to_string(frame));
}

std::string merge_conv_prefix(const ModelConfig& config, int frame) {
    return config.conv_m1_shared ? std::string("conv_M1") : "conv_M1." + std::to_string(frame);
}

std::map<std::string, Shape> parameter_shapes(const ModelConfig& config) {
    config.validate();
    std::map<std::string, Shape> shapes;
    const int e1 = config.encoder1_channels;
    const int e2 = config.encoder2_channels;
    const int m = config.merge_channels;
    const int x = 2 * e2;
    const int sc = config.scram_spatial_channels;
    const auto& hid = config.scram_hidden;

    add_conv(shapes, "conv_E1", 6, e1, 3);
    add_conv(shapes, "conv_E2", e1, e2, 3);

    const bool spatial = config.attention == AttentionVariant::scram || config.attention == AttentionVariant::scram_spatial_only;
    const bool channel = config.attention == AttentionVariant::scram || config.attention == AttentionVariant::scram_channel_only;
    for (const int frame : kNonReference) {
        const std::string p = attention_prefix(config, frame);
        if (spatial) {
            add_conv(shapes, p + ".spatial.reduce", x, sc, 1);
            add_conv(shapes, p + ".spatial.dil1", sc, sc, 3);
            add_conv(shapes, p + ".spatial.dil2", sc, sc, 3);
            add_conv(shapes, p + ".spatial.dil3", sc, sc, 3);
            add_conv(shapes, p + ".spatial.project", sc, 1, 1);
        }
        if (channel) {
            add_linear(shapes, p + ".channel.fc1", x, hid[0]);
            add_linear(shapes, p + ".channel.fc2", hid[0], hid[1]);
            add_linear(shapes, p + ".channel.fc3", hid[1], hid[2]);
            add_linear(shapes, p + ".channel.fc4", hid[2], e2);
        }
        if (config.attention == AttentionVariant::ahdrnet_like) {
            add_conv(shapes, p + ".conv1", x, x, 3);
            add_conv(shapes, p + ".conv2", x, e2, 3);
        }
    }
    for (int frame = 1; frame <= 3; ++frame) add_conv(shapes, merge_conv_prefix(config, frame), e2, m, 3);
    add_conv(shapes, "conv_M2", 2 * m, m, 3);
    add_conv(shapes, "conv_M3", m, m, 3);
    add_conv(shapes, "conv_M4", m, m, 3);
    add_conv(shapes, "conv_D", m / (config.upscale * config.upscale), 3, 3);
    return shapes;
}

ModelWeights build_model(const ModelConfig& config, std::uint64_t seed) {
    const auto shapes = parameter_shapes(config);
    std::mt19937_64 rng(seed);
    ModelWeights weights;
    for (const auto& [name, shape] : shapes) {
        Tensor t(shape);
        if (name.ends_with(".weight")) {
            const double fan_in = static_cast<double>(shape.c * shape.h * shape.w);
            const double bound = std::sqrt(6.0 / fan_in);
            for (auto& v : t.data()) {
                // 53 random bits -> [0, 1), independent of the standard library's distributions.
                const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                v = static_cast<float>((2.0 * u - 1.0) * bound);
            }
        }
        weights.emplace(name, std::move(t));
    }
    return weights;
}

std::int64_t count_elements(const ModelWeights& weights) {
    std::int64_t total = 0;
    for (const auto& [name, t] : weights) total += t.numel();
    return total;
}

template <typename T>
void validate_weights(const ParamMap<T>& weights, const ModelConfig& config) {
    const auto shapes = parameter_shapes(config);
    for (const auto& [name, shape] : shapes) {
        const auto it = weights.find(name);
        if (it == weights.end()) throw ConfigError("weights are missing '" + name + "'");
        if (it->second.shape() != shape) throw ShapeMismatchError("weight '" + name + "' has shape " + it->second.shape().str() + ", config requires " + shape.str());
    }
    for (const auto& [name, t] : weights)
        if (!shapes.contains(name)) throw ConfigError("unexpected weight '" + name + "' for this config");
}

template <typename T>
Encoded<T> encode(const BasicTensor<T>& ldr, const ParamMap<T>& weights, const ModelConfig& config) {
    (void)config;
    require_inputs(ldr.shape(), "encode");
    graph::EagerOps<T> g{weights};
    auto e = graph::encode(g, ldr);
    return {std::move(e.skip), std::move(e.features)};
}

template <typename T>
BasicTensor<T> scram(const BasicTensor<T>& features, const BasicTensor<T>& reference, const ParamMap<T>& weights, const ModelConfig& config, int frame) {
    if (frame != 1 && frame != 3) throw ConfigError("attention applies to non-reference frames 1 and 3 only");
    graph::EagerOps<T> g{weights};
    return graph::attention(g, features, reference, config, frame);
}

template <typename T>
BasicTensor<T> apply_attention(const BasicTensor<T>& features, const BasicTensor<T>& attention) {
    if (features.shape() != attention.shape())
        throw DimensionError("apply_attention", "attention", "features " + features.shape().str() + " vs attention " + attention.shape().str());
    return kernels::elementwise(features, attention, kernels::Binary::mul);
}

template <typename T>
BasicTensor<T> merge(const std::array<BasicTensor<T>, 3>& aligned, const ParamMap<T>& weights, const ModelConfig& config) {
    graph::EagerOps<T> g{weights};
    return graph::merge(g, aligned, config);
}

template <typename T>
BasicTensor<T> decode(const BasicTensor<T>& merged, const BasicTensor<T>& reference_skip, const ParamMap<T>& weights, const ModelConfig& config) {
    graph::EagerOps<T> g{weights};
    return graph::decode(g, merged, reference_skip, config);
}

namespace {

template <class G, class V>
typename G::Value run_graph(G& g, const std::array<V, 3>& inputs, const ModelConfig& config, ForwardTrace* trace) {
    auto e1 = graph::encode(g, inputs[0]);
    auto e2 = graph::encode(g, inputs[1]);
    auto e3 = graph::encode(g, inputs[2]);
    if (trace) {
        trace->reference_skip = g.shape(e2.skip);
        trace->features = {g.shape(e1.features), g.shape(e2.features), g.shape(e3.features)};
    }
    std::array<typename G::Value, 3> aligned{e1.features, e2.features, e3.features};
    if (config.attention != AttentionVariant::none) {
        aligned[0] = g.mul(e1.features, graph::attention(g, e1.features, e2.features, config, 1));
        aligned[2] = g.mul(e3.features, graph::attention(g, e3.features, e2.features, config, 3));
    }
    if (trace) trace->aligned = {g.shape(aligned[0]), g.shape(aligned[1]), g.shape(aligned[2])};
    auto merged = graph::merge(g, aligned, config);
    if (trace) {
        trace->merged = g.shape(merged);
        trace->decoded = g.shape(g.shuffle(merged, config.upscale));
    }
    auto out = graph::decode(g, merged, e2.skip, config);
    if (trace) trace->output = g.shape(out);
    return out;
}

template <typename T>
void check_inputs(const std::array<BasicTensor<T>, 3>& inputs) {
    for (const auto& in : inputs) {
        require_inputs(in.shape(), "forward");
        if (in.shape() != inputs[1].shape()) throw DimensionError("forward", "inputs", "frame shapes differ: " + in.shape().str() + " vs " + inputs[1].shape().str());
    }
}

}  // namespace

template <typename T>
BasicTensor<T> forward(const std::array<BasicTensor<T>, 3>& inputs, const ParamMap<T>& weights, const ModelConfig& config, ForwardTrace* trace) {
    check_inputs(inputs);
    validate_weights(weights, config);
    graph::EagerOps<T> g{weights};
    return run_graph(g, inputs, config, trace);
}

template <typename T>
ad::Var<T> forward(ad::Tape<T>& tape, const std::array<BasicTensor<T>, 3>& inputs, const ParamMap<T>& weights, const ModelConfig& config) {
    check_inputs(inputs);
    validate_weights(weights, config);
    graph::TapeOps<T> g(tape, weights);
    const std::array<ad::Var<T>, 3> vars{tape.constant(inputs[0]), tape.constant(inputs[1]), tape.constant(inputs[2])};
    return run_graph(g, vars, config, nullptr);
}

#define CENHDR_INSTANTIATE_MODEL(T)                                                                                                          \
    template void validate_weights(const ParamMap<T>&, const ModelConfig&);                                                                  \
    template Encoded<T> encode(const BasicTensor<T>&, const ParamMap<T>&, const ModelConfig&);                                               \
    template BasicTensor<T> scram(const BasicTensor<T>&, const BasicTensor<T>&, const ParamMap<T>&, const ModelConfig&, int);                \
    template BasicTensor<T> apply_attention(const BasicTensor<T>&, const BasicTensor<T>&);                                                   \
    template BasicTensor<T> merge(const std::array<BasicTensor<T>, 3>&, const ParamMap<T>&, const ModelConfig&);                             \
    template BasicTensor<T> decode(const BasicTensor<T>&, const BasicTensor<T>&, const ParamMap<T>&, const ModelConfig&);                    \
    template BasicTensor<T> forward(const std::array<BasicTensor<T>, 3>&, const ParamMap<T>&, const ModelConfig&, ForwardTrace*);            \
    template ad::Var<T> forward(ad::Tape<T>&, const std::array<BasicTensor<T>, 3>&, const ParamMap<T>&, const ModelConfig&);

CENHDR_INSTANTIATE_MODEL(float)
CENHDR_INSTANTIATE_MODEL(double)

#undef CENHDR_INSTANTIATE_MODEL

}  // namespace cenhdr
