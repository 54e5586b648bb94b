#include "cenhdr/profiler.hpp"

#include <sys/utsname.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "cenhdr/pipeline.hpp"
#include "cenhdr/weights_io.hpp"
#include "json.hpp"

namespace cenhdr {

namespace {

struct Resolution {
    std::int64_t full_h, full_w, half_h, half_w;
};

class RowBuilder {
public:
    RowBuilder(std::vector<CostRow>& rows, const std::optional<Resolution>& res) : rows_(rows), res_(res) {}

    void conv(const std::string& name, int c_in, int c_out, int k, bool full_res, int applications) {
        CostRow r{name, "conv", c_in, c_out, k, 0, 0, applications, (static_cast<std::int64_t>(c_in) * k * k + 1) * c_out, 0};
        if (res_) {
            r.out_h = full_res ? res_->full_h : res_->half_h;
            r.out_w = full_res ? res_->full_w : res_->half_w;
            r.macs = static_cast<std::int64_t>(c_in) * k * k * c_out * r.out_h * r.out_w * applications;
        }
        rows_.push_back(r);
    }

    void linear(const std::string& name, int c_in, int c_out, int applications) {
        CostRow r{name, "linear", c_in, c_out, 1, 0, 0, applications, (static_cast<std::int64_t>(c_in) + 1) * c_out, 0};
        if (res_) {
            r.out_h = r.out_w = 1;
            r.macs = static_cast<std::int64_t>(c_in) * c_out * applications;
        }
        rows_.push_back(r);
    }

private:
    std::vector<CostRow>& rows_;
    std::optional<Resolution> res_;
};

CostReport build_report(const ModelConfig& c, const std::optional<Resolution>& res) {
    c.validate();
    CostReport report;
    report.config = c;
    RowBuilder b(report.rows, res);
    const int e1 = c.encoder1_channels, e2 = c.encoder2_channels, m = c.merge_channels, x = 2 * c.encoder2_channels, sc = c.scram_spatial_channels;

    b.conv("conv_E1", 6, e1, 3, true, 3);
    b.conv("conv_E2", e1, e2, 3, false, 3);

    const bool spatial = c.attention == AttentionVariant::scram || c.attention == AttentionVariant::scram_spatial_only;
    const bool channel = c.attention == AttentionVariant::scram || c.attention == AttentionVariant::scram_channel_only;
    const bool ahdr = c.attention == AttentionVariant::ahdrnet_like;
    if (spatial || channel || ahdr) {
        const std::string root = ahdr ? "ahdr." : "scram.";
        const std::vector<std::string> instances = c.scram_shared_across_frames ? std::vector<std::string>{"shared"} : std::vector<std::string>{"1", "3"};
        const int apps = c.scram_shared_across_frames ? 2 : 1;
        for (const auto& inst : instances) {
            const std::string p = root + inst;
            if (spatial) {
                b.conv(p + ".spatial.reduce", x, sc, 1, false, apps);
                b.conv(p + ".spatial.dil1", sc, sc, 3, false, apps);
                b.conv(p + ".spatial.dil2", sc, sc, 3, false, apps);
                b.conv(p + ".spatial.dil3", sc, sc, 3, false, apps);
                b.conv(p + ".spatial.project", sc, 1, 1, false, apps);
            }
            if (channel) {
                b.linear(p + ".channel.fc1", x, c.scram_hidden[0], apps);
                b.linear(p + ".channel.fc2", c.scram_hidden[0], c.scram_hidden[1], apps);
                b.linear(p + ".channel.fc3", c.scram_hidden[1], c.scram_hidden[2], apps);
                b.linear(p + ".channel.fc4", c.scram_hidden[2], e2, apps);
            }
            if (ahdr) {
                b.conv(p + ".conv1", x, x, 3, false, apps);
                b.conv(p + ".conv2", x, e2, 3, false, apps);
            }
        }
    }
    if (c.conv_m1_shared) {
        b.conv("conv_M1", e2, m, 3, false, 3);
    } else {
        for (int f = 1; f <= 3; ++f) b.conv("conv_M1." + std::to_string(f), e2, m, 3, false, 1);
    }
    b.conv("conv_M2", 2 * m, m, 3, false, 1);
    b.conv("conv_M3", m, m, 3, false, 1);
    b.conv("conv_M4", m, m, 3, false, 1);
    b.conv("conv_D", m / (c.upscale * c.upscale), 3, 3, true, 1);

    for (const auto& r : report.rows) {
        report.total_params += r.params;
        report.total_macs += r.macs;
    }
    if (res) {
        report.height = res->full_h;
        report.width = res->full_w;
    }
    return report;
}

bool is_attention(const CostRow& r) { return r.layer.starts_with("scram.") || r.layer.starts_with("ahdr."); }

std::string percent(double ours, double theirs) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f%%", 100.0 * (ours - theirs) / theirs);
    return buf;
}

}  // namespace

std::int64_t CostReport::attention_params() const {
    std::int64_t total = 0;
    for (const auto& r : rows)
        if (is_attention(r)) total += r.params;
    return total;
}

std::int64_t CostReport::attention_macs() const {
    std::int64_t total = 0;
    for (const auto& r : rows)
        if (is_attention(r)) total += r.macs;
    return total;
}

CostReport count_params(const ModelConfig& config) { return build_report(config, std::nullopt); }

CostReport count_macs(const ModelConfig& config, std::int64_t height, std::int64_t width) {
    if (height < 2 || height % 2 != 0) throw DimensionError("count_macs", "height", std::to_string(height) + " must be even and positive");
    if (width < 2 || width % 2 != 0) throw DimensionError("count_macs", "width", std::to_string(width) + " must be even and positive");
    return build_report(config, Resolution{height, width, height / 2, width / 2});
}

std::string format_gmacs(std::int64_t macs) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(macs) / 1e9);
    return buf;
}

std::string machine_description() {
    std::string cpu = "unknown CPU";
    std::ifstream info("/proc/cpuinfo");
    for (std::string line; std::getline(info, line);)
        if (line.starts_with("model name")) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
            break;
        }
    std::string os = "unknown OS";
    utsname u{};
    if (uname(&u) == 0) os = std::string(u.sysname) + " " + u.release + " " + u.machine;
    return os + "; " + cpu + "; " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
}

RuntimeStats bench_runtime(const ModelWeights& weights, const ModelConfig& config, std::int64_t height, std::int64_t width, int runs, int warmup,
                           std::uint64_t seed) {
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (warmup < 0) throw ConfigError("warmup must be >= 0");
    if (height % 2 != 0 || width % 2 != 0) throw DimensionError("bench", height % 2 != 0 ? "height" : "width", "benchmark dimensions must be even");
    validate_weights(weights, config);

    std::mt19937_64 rng(seed);
    ExposureBracket bracket;
    bracket.exposure_times = exposure_times_from_ev({-2.0, 0.0, 2.0});
    for (auto& frame : bracket.ldr) {
        frame = make_raster(height, width);
        for (auto& v : frame.data()) v = static_cast<float>(static_cast<double>(rng() >> 11) * 0x1.0p-53);
    }

    RuntimeStats stats;
    stats.runs = runs;
    stats.warmup = warmup;
    stats.height = height;
    stats.width = width;
    stats.machine = machine_description();
    double sink = 0.0;
    for (int i = 0; i < warmup + runs; ++i) {
        const auto start = std::chrono::steady_clock::now();
        const auto inputs = assemble_inputs(bracket, config.gamma);
        const Tensor tonemapped = mu_law(forward(inputs.inputs, weights, config));
        const auto stop = std::chrono::steady_clock::now();
        sink += tonemapped[0];
        if (i >= warmup) stats.timings_s.push_back(std::chrono::duration<double>(stop - start).count());
    }
    double sum = 0.0;
    for (const double t : stats.timings_s) sum += t;
    stats.mean_s = sum / runs;
    double sq = 0.0;
    for (const double t : stats.timings_s) sq += (t - stats.mean_s) * (t - stats.mean_s);
    stats.std_s = std::sqrt(sq / runs);
    stats.fps = 1.0 / stats.mean_s;
    if (std::isnan(sink)) stats.machine += " (non-finite output)";
    return stats;
}

std::string report_text(const CostReport& r) {
    std::ostringstream out;
    const bool with_macs = r.height > 0;
    char line[256];
    std::snprintf(line, sizeof line, "%-28s %-7s %-16s %5s %10s %14s\n", "layer", "kind", "output", "apps", "params", with_macs ? "GMAccs" : "");
    out << line;
    for (const auto& row : r.rows) {
        std::string shape = "-";
        if (with_macs) shape = std::to_string(row.c_out) + "x" + std::to_string(row.out_h) + "x" + std::to_string(row.out_w);
        std::snprintf(line, sizeof line, "%-28s %-7s %-16s %5d %10lld %14s\n", row.layer.c_str(), row.kind.c_str(), shape.c_str(), row.applications,
                      static_cast<long long>(row.params), with_macs ? (row.macs >= 10'000'000 ? format_gmacs(row.macs) : std::to_string(row.macs) + " MACs").c_str() : "");
        out << line;
    }
    out << std::string(86, '-') << '\n';
    out << "total params: " << r.total_params << '\n';
    if (with_macs) out << "total GMAccs at " << r.width << "x" << r.height << ": " << format_gmacs(r.total_macs) << " (" << r.total_macs << " MACs)\n";
    out << "attention params: " << r.attention_params() << (with_macs ? ", attention GMAccs: " + format_gmacs(r.attention_macs()) : "") << '\n';
    if (r.runtime) {
        const auto& s = *r.runtime;
        char buf[256];
        std::snprintf(buf, sizeof buf, "runtime at %lldx%lld over %d runs (%d warm-up): mean %.6f s, std %.6f s, %.2f FPS\n", static_cast<long long>(s.width),
                      static_cast<long long>(s.height), s.runs, s.warmup, s.mean_s, s.std_s, s.fps);
        out << buf << "machine: " << s.machine << '\n';
    }
    out << "\nreference figures (published):\n";
    out << "  params 282883; ours " << r.total_params << " (" << percent(static_cast<double>(r.total_params), PublishedCosts::params) << ")\n";
    if (with_macs) {
        const double g = static_cast<double>(r.total_macs) / 1e9;
        if (r.width == 1900 && r.height == 1060) out << "  128.78 GMAccs at 1900x1060; ours " << format_gmacs(r.total_macs) << " (" << percent(g, PublishedCosts::gmacs_1900x1060) << ")\n";
        if (r.width == 1280 && r.height == 720)
            out << "  78.36 GMAccs at 1280x720; ours " << format_gmacs(r.total_macs) << " (" << percent(g, PublishedCosts::gmacs_1280x720)
                << "); this figure is inconsistent with 128.78 at 1900x1060 under per-pixel scaling\n";
        if (!(r.width == 1900 && r.height == 1060) && !(r.width == 1280 && r.height == 720))
            out << "  128.78 GMAccs at 1900x1060 and 78.36 at 1280x720 (run at those sizes to compare)\n";
    }
    out << "  attention module of AHDRNet: 55392 params; ours " << r.attention_params() / std::max<std::int64_t>(1, r.config.scram_shared_across_frames ? 1 : 2)
        << " per instance\n";
    out << "  runtime 0.0277 s / 36.38 FPS on an Apple M1 NPU (hardware-bound, not reproducible here)\n";
    out << "MACs count multiply-accumulates (FLOPs = 2 x MACs); biases, activations, pooling, pixel shuffle and elementwise ops count as 0.\n";
    return out.str();
}

std::string report_csv(const CostReport& r) {
    std::ostringstream out;
    out << "layer,kind,c_in,c_out,kernel,out_h,out_w,applications,params,macs\n";
    for (const auto& row : r.rows)
        out << row.layer << ',' << row.kind << ',' << row.c_in << ',' << row.c_out << ',' << row.kernel << ',' << row.out_h << ',' << row.out_w << ',' << row.applications
            << ',' << row.params << ',' << row.macs << '\n';
    out << "total,,,,,,,," << r.total_params << ',' << r.total_macs << '\n';
    return out.str();
}

std::string report_json(const CostReport& r, int indent) {
    using nlohmann::json;
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"layer", row.layer}, {"kind", row.kind},  {"c_in", row.c_in},     {"c_out", row.c_out}, {"kernel", row.kernel},
                        {"out_h", row.out_h}, {"out_w", row.out_w}, {"applications", row.applications}, {"params", row.params}, {"macs", row.macs}});
    json j{{"config", json::parse(config_to_json(r.config))},
           {"height", r.height},
           {"width", r.width},
           {"rows", rows},
           {"total_params", r.total_params},
           {"total_macs", r.total_macs},
           {"total_gmacs", format_gmacs(r.total_macs)},
           {"attention_params", r.attention_params()},
           {"attention_macs", r.attention_macs()},
           {"published", {{"params", PublishedCosts::params},
                          {"gmacs_1900x1060", PublishedCosts::gmacs_1900x1060},
                          {"gmacs_1280x720", PublishedCosts::gmacs_1280x720},
                          {"runtime_s", PublishedCosts::runtime_s},
                          {"fps", PublishedCosts::fps}}},
           {"params_deviation_percent", 100.0 * (static_cast<double>(r.total_params) - PublishedCosts::params) / PublishedCosts::params}};
    if (r.height == 1060 && r.width == 1900)
        j["gmacs_deviation_percent"] = 100.0 * (static_cast<double>(r.total_macs) / 1e9 - PublishedCosts::gmacs_1900x1060) / PublishedCosts::gmacs_1900x1060;
    if (r.height == 720 && r.width == 1280)
        j["gmacs_deviation_percent"] = 100.0 * (static_cast<double>(r.total_macs) / 1e9 - PublishedCosts::gmacs_1280x720) / PublishedCosts::gmacs_1280x720;
    if (r.runtime) {
        const auto& s = *r.runtime;
        j["runtime"] = {{"runs", s.runs},     {"warmup", s.warmup}, {"height", s.height},       {"width", s.width},
                        {"mean_s", s.mean_s}, {"std_s", s.std_s},   {"fps", s.fps},             {"timings_s", s.timings_s},
                        {"machine", s.machine}};
    }
    return j.dump(indent);
}

}  // namespace cenhdr
