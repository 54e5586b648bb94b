#pragma once

// The network graph, written once against an abstract op set `G` so the same
// code runs eagerly on tensors (inference) and on a tape (training).
//
// G provides: Value, param(name), conv, relu, sigmoid, add, mul, expand,
// concat, gap, linear, shuffle, shape.

#include <array>
#include <string>

#include "cenhdr/autodiff.hpp"
#include "cenhdr/kernels.hpp"
#include "cenhdr/model.hpp"

namespace cenhdr::graph {

using kernels::Conv2dParams;

inline constexpr Conv2dParams kSame3x3{1, 1, 1};
inline constexpr Conv2dParams kDown3x3{2, 1, 1};
inline constexpr Conv2dParams kDilated3x3{1, 2, 2};
inline constexpr Conv2dParams kPointwise{1, 0, 1};

template <typename T>
struct EagerOps {
    using Value = BasicTensor<T>;
    const ParamMap<T>& params;

    const Value& param(const std::string& name) const {
        const auto it = params.find(name);
        if (it == params.end()) throw ConfigError("missing weight '" + name + "'");
        return it->second;
    }
    static Value conv(const Value& x, const Value& w, const Value& b, Conv2dParams p) { return kernels::conv2d(x, w, b, p); }
    static Value relu(const Value& x) { return kernels::activation(x, kernels::Activation::relu); }
    static Value sigmoid(const Value& x) { return kernels::activation(x, kernels::Activation::sigmoid); }
    static Value add(const Value& a, const Value& b) { return kernels::elementwise(a, b, kernels::Binary::add); }
    static Value mul(const Value& a, const Value& b) { return kernels::elementwise(a, b, kernels::Binary::mul); }
    static Value expand(const Value& x, const Shape& s) { return kernels::expand(x, s); }
    static Value concat(const Value& a, const Value& b) {
        const Value* parts[] = {&a, &b};
        return kernels::concat_channels<T>(parts);
    }
    static Value gap(const Value& x) { return kernels::global_avg_pool(x); }
    static Value linear(const Value& x, const Value& w, const Value& b) { return kernels::linear(x, w, b); }
    static Value shuffle(const Value& x, int r) { return kernels::pixel_shuffle(x, r); }
    static Shape shape(const Value& x) { return x.shape(); }
};

template <typename T>
struct TapeOps {
    using Value = ad::Var<T>;
    std::map<std::string, Value> vars;

    TapeOps(ad::Tape<T>& tape, const ParamMap<T>& params) {
        for (const auto& [name, value] : params) vars.emplace(name, tape.parameter(name, value));
    }

    Value param(const std::string& name) const {
        const auto it = vars.find(name);
        if (it == vars.end()) throw ConfigError("missing weight '" + name + "'");
        return it->second;
    }
    static Value conv(Value x, Value w, Value b, Conv2dParams p) { return ad::conv2d(x, w, b, p); }
    static Value relu(Value x) { return ad::relu(x); }
    static Value sigmoid(Value x) { return ad::sigmoid(x); }
    static Value add(Value a, Value b) { return ad::add(a, b); }
    static Value mul(Value a, Value b) { return ad::mul(a, b); }
    static Value expand(Value x, const Shape& s) { return ad::expand(x, s); }
    static Value concat(Value a, Value b) { return ad::concat_channels<T>({a, b}); }
    static Value gap(Value x) { return ad::global_avg_pool(x); }
    static Value linear(Value x, Value w, Value b) { return ad::linear(x, w, b); }
    static Value shuffle(Value x, int r) { return ad::pixel_shuffle(x, r); }
    static Shape shape(Value x) { return x.shape(); }
};

template <class G, class V>
auto conv_layer(G& g, const V& x, const std::string& name, Conv2dParams p) {
    return g.conv(x, g.param(name + ".weight"), g.param(name + ".bias"), p);
}

template <class G, class V>
auto linear_layer(G& g, const V& x, const std::string& name) {
    return g.linear(x, g.param(name + ".weight"), g.param(name + ".bias"));
}

template <class G>
struct EncodedValues {
    typename G::Value skip;
    typename G::Value features;
};

template <class G, class V>
EncodedValues<G> encode(G& g, const V& ldr) {
    auto skip = g.relu(conv_layer(g, ldr, "conv_E1", kSame3x3));
    auto features = conv_layer(g, skip, "conv_E2", kDown3x3);
    return {std::move(skip), std::move(features)};
}

template <class G, class V>
typename G::Value spatial_branch(G& g, const V& x, const std::string& prefix) {
    auto r = g.relu(conv_layer(g, x, prefix + ".spatial.reduce", kPointwise));
    for (const char* layer : {".spatial.dil1", ".spatial.dil2", ".spatial.dil3"}) r = g.relu(conv_layer(g, r, prefix + layer, kDilated3x3));
    return conv_layer(g, r, prefix + ".spatial.project", kPointwise);
}

template <class G, class V>
typename G::Value channel_branch(G& g, const V& x, const std::string& prefix) {
    auto v = g.gap(x);
    for (const char* layer : {".channel.fc1", ".channel.fc2", ".channel.fc3"}) v = g.relu(linear_layer(g, v, prefix + layer));
    return linear_layer(g, v, prefix + ".channel.fc4");
}

/// Attention map for a non-reference frame; requires config.attention != none.
template <class G, class V>
typename G::Value attention(G& g, const V& features, const V& reference, const ModelConfig& config, int frame) {
    const Shape target = g.shape(features);
    const Shape& ref = g.shape(reference);
    if (ref != target) throw DimensionError("scram", "features", "reference " + ref.str() + " vs non-reference " + target.str());
    const auto x = g.concat(features, reference);
    const std::string prefix = attention_prefix(config, frame);
    switch (config.attention) {
        case AttentionVariant::scram:
            return g.sigmoid(g.add(g.expand(spatial_branch(g, x, prefix), target), channel_branch(g, x, prefix)));
        case AttentionVariant::scram_spatial_only:
            return g.sigmoid(g.expand(spatial_branch(g, x, prefix), target));
        case AttentionVariant::scram_channel_only:
            return g.sigmoid(g.expand(channel_branch(g, x, prefix), target));
        case AttentionVariant::ahdrnet_like:
            return g.sigmoid(conv_layer(g, g.relu(conv_layer(g, x, prefix + ".conv1", kSame3x3)), prefix + ".conv2", kSame3x3));
        case AttentionVariant::none:
            break;
    }
    throw ConfigError("attention variant 'none' has no attention map");
}

template <class G, class V>
typename G::Value merge(G& g, const std::array<V, 3>& aligned, const ModelConfig& config) {
    const Shape& s = g.shape(aligned[1]);
    for (const auto& a : aligned)
        if (g.shape(a) != s) throw DimensionError("merge", "features", "frame shapes differ: " + g.shape(a).str() + " vs " + s.str());
    auto m1 = g.relu(conv_layer(g, aligned[0], merge_conv_prefix(config, 1), kSame3x3));
    auto m2 = g.relu(conv_layer(g, aligned[1], merge_conv_prefix(config, 2), kSame3x3));
    auto m3 = g.relu(conv_layer(g, aligned[2], merge_conv_prefix(config, 3), kSame3x3));
    auto non_ref = g.relu(conv_layer(g, g.concat(m1, m3), "conv_M2", kSame3x3));
    auto fused = g.relu(conv_layer(g, g.add(m2, non_ref), "conv_M3", kSame3x3));
    return g.relu(conv_layer(g, fused, "conv_M4", kSame3x3));
}

template <class G, class V>
typename G::Value decode(G& g, const V& merged, const V& skip, const ModelConfig& config) {
    auto shuffled = g.shuffle(merged, config.upscale);
    const Shape& ds = g.shape(shuffled);
    const Shape& ss = g.shape(skip);
    if (ds != ss) throw DimensionError("decode", "skip", "pixel-shuffled features " + ds.str() + " vs reference skip " + ss.str());
    return g.sigmoid(conv_layer(g, g.add(shuffled, skip), "conv_D", kSame3x3));
}

}  // namespace cenhdr::graph
