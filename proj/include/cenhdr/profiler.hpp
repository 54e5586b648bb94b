#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cenhdr/model.hpp"

namespace cenhdr {

/// Figures printed alongside our counts for comparison.
struct PublishedCosts {
    static constexpr std::int64_t params = 282883;
    static constexpr double gmacs_1900x1060 = 128.78;
    static constexpr double gmacs_1280x720 = 78.36;
    static constexpr double runtime_s = 0.0277;
    static constexpr double fps = 36.38;
    static constexpr std::int64_t ahdrnet_attention_params = 55392;
};

struct CostRow {
    std::string layer;
    std::string kind;           // "conv" or "linear"
    int c_in = 0, c_out = 0, kernel = 1;
    std::int64_t out_h = 0, out_w = 0;  // per application; 0 before a resolution is set
    int applications = 1;               // frames the layer runs on
    std::int64_t params = 0;
    std::int64_t macs = 0;  // all applications
};

struct RuntimeStats {
    int runs = 0;
    int warmup = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    double mean_s = 0.0;
    double std_s = 0.0;
    double fps = 0.0;
    std::vector<double> timings_s;
    std::string machine;
};

struct CostReport {
    ModelConfig config;
    std::int64_t height = 0;  // 0 when only parameters were counted
    std::int64_t width = 0;
    std::vector<CostRow> rows;
    std::int64_t total_params = 0;
    std::int64_t total_macs = 0;
    std::optional<RuntimeStats> runtime;

    /// Params and MACs of the attention rows only.
    std::int64_t attention_params() const;
    std::int64_t attention_macs() const;
};

/// Closed-form per-layer parameter counts (no tensors are built).
CostReport count_params(const ModelConfig& config);
/// Parameter and multiply-accumulate counts for an H x W input. Biases,
/// activations, pooling, pixel shuffle and elementwise ops cost 0 MACs.
CostReport count_macs(const ModelConfig& config, std::int64_t height, std::int64_t width);

/// "128.50": MACs / 1e9 with two decimals.
std::string format_gmacs(std::int64_t macs);

/// Times projection -> forward -> mu-law tone map on random inputs.
RuntimeStats bench_runtime(const ModelWeights& weights, const ModelConfig& config, std::int64_t height, std::int64_t width, int runs = 500, int warmup = 50,
                           std::uint64_t seed = 0);
std::string machine_description();

std::string report_text(const CostReport& report);
std::string report_csv(const CostReport& report);
std::string report_json(const CostReport& report, int indent = 2);

}  // namespace cenhdr
