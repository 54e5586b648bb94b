#include "cenhdr/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "cenhdr/kernels.hpp"
#include "cenhdr/metrics.hpp"
#include "cenhdr/profiler.hpp"
#include "cenhdr/weights_io.hpp"
#include "json.hpp"

namespace cenhdr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    return s.substr(begin, s.find_last_not_of(" \t\r") - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T result{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), result);
    if (ec != std::errc{} || ptr != value.data() + value.size()) throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    return result;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

void apply_key(ConfigFile& c, const std::string& key, const std::string& value) {
    auto i64 = [&] { return parse_number<std::int64_t>(key, value); };
    auto i32 = [&] { return parse_number<int>(key, value); };
    auto f64 = [&] { return parse_number<double>(key, value); };
    auto& m = c.model;
    auto& t = c.train;
    if (key == "encoder1_channels") m.encoder1_channels = i32();
    else if (key == "encoder2_channels") m.encoder2_channels = i32();
    else if (key == "merge_channels") m.merge_channels = i32();
    else if (key == "scram_spatial_channels") m.scram_spatial_channels = i32();
    else if (key == "scram_hidden") {
        std::stringstream in(value);
        std::string part;
        std::vector<int> widths;
        while (std::getline(in, part, ',')) widths.push_back(parse_number<int>(key, trim(part)));
        if (widths.size() != 3) throw ConfigError("config key 'scram_hidden': expected three comma-separated widths");
        m.scram_hidden = {widths[0], widths[1], widths[2]};
    }
    else if (key == "scram_shared_across_frames") m.scram_shared_across_frames = parse_bool(key, value);
    else if (key == "conv_m1_shared") m.conv_m1_shared = parse_bool(key, value);
    else if (key == "upscale") m.upscale = i32();
    else if (key == "gamma") m.gamma = f64();
    else if (key == "attention") m.attention = parse_attention_variant(value);
    else if (key == "patch_size") t.patch_size = i64();
    else if (key == "stride") t.stride = i64();
    else if (key == "batch_size") t.batch_size = i64();
    else if (key == "epochs") t.epochs = i64();
    else if (key == "lr0") t.lr0 = f64();
    else if (key == "lr_fixed_epochs") t.lr_fixed_epochs = i64();
    else if (key == "lr_decay") t.lr_decay = f64();
    else if (key == "lr_decay_every") t.lr_decay_every = i64();
    else if (key == "alpha") t.alpha = f64();
    else if (key == "kd_enabled") t.kd_enabled = parse_bool(key, value);
    else if (key == "mu") t.mu = f64();
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "augment") t.augment = parse_bool(key, value);
    else if (key == "max_steps") t.max_steps = i64();
    else if (key == "checkpoint_every") t.checkpoint_every = i64();
    else if (key == "workers") t.workers = i32();
    else throw ConfigError("unknown config key '" + key + "'");
}

ConfigFile load_config_or_default(const std::string& path) {
    if (path.empty()) return {};
    try {
        return read_config(path);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

void require_even(std::int64_t height, std::int64_t width) {
    if (height < 2 || height % 2 != 0) throw UsageError("--height must be a positive even number, got " + std::to_string(height));
    if (width < 2 || width % 2 != 0) throw UsageError("--width must be a positive even number, got " + std::to_string(width));
}

void apply_thread_limit() {
    const char* env = std::getenv("CENHDR_THREADS");
    if (env == nullptr || *env == '\0') return;
    int threads = 0;
    const std::string value = env;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), threads);
    if (ec != std::errc{} || ptr != value.data() + value.size() || threads < 1) throw UsageError("CENHDR_THREADS must be a positive integer, got '" + value + "'");
    kernels::set_thread_limit(threads);
}

// Wraps a pipeline stage so failures name it.
template <typename F>
auto stage(const char* name, std::vector<std::pair<std::string, double>>& timings, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            timings.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        } else {
            auto result = fn();
            timings.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
            return result;
        }
    } catch (const Error& e) {
        throw Error(std::string(name) + ": " + e.what());
    }
}

json metric_value(double v) {
    if (std::isfinite(v)) return v;
    return format_metric(v);
}

json metric_row(const MetricRow& r) {
    return {{"scene", r.scene}, {"mu_psnr", metric_value(r.mu_psnr)}, {"psnr", metric_value(r.psnr)}, {"mu_ssim", metric_value(r.mu_ssim)}, {"ssim", metric_value(r.ssim)}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

// ---- subcommands ----

struct MergeArgs {
    std::vector<std::string> inputs;
    std::string exposures, weights, out, tonemapped;
    double gamma = kDefaultGamma;
    double mu = kDefaultMu;
};

void cmd_merge(const MergeArgs& a, const CLI::App& sub, std::ostream& out) {
    if (!(a.mu > 0.0) || !std::isfinite(a.mu)) throw UsageError("--mu must be positive");
    if (!(a.gamma > 0.0) || !std::isfinite(a.gamma)) throw UsageError("--gamma must be positive");
    std::vector<std::pair<std::string, double>> timings;
    auto model = stage("load weights", timings, [&] { return load_weights(a.weights); });
    if (sub.count("--gamma") > 0) model.config.gamma = a.gamma;
    ExposureBracket bracket = stage("read inputs", timings, [&] {
        ExposureBracket b;
        for (int i = 0; i < 3; ++i) b.ldr[i] = read_ldr(a.inputs[i]);
        b.exposure_times = exposure_times_from_ev(read_exposures(a.exposures));
        b.validate();
        return b;
    });
    const auto assembled = stage("assemble", timings, [&] { return assemble_inputs(bracket, model.config.gamma); });
    const Tensor padded = stage("forward", timings, [&] { return forward(assembled.inputs, model.weights, model.config); });
    const Tensor hdr = crop(padded, assembled.height, assembled.width);
    stage("write", timings, [&] {
        write_hdr(hdr, a.out);
        if (!a.tonemapped.empty()) write_tonemapped(hdr, a.tonemapped, a.mu);
    });
    out << "merged " << bracket.width() << "x" << bracket.height() << " -> " << a.out << '\n';
    double total = 0.0;
    for (const auto& [name, seconds] : timings) {
        out << "  " << std::left << std::setw(14) << name << std::fixed << std::setprecision(4) << seconds << " s\n";
        total += seconds;
    }
    out << "  " << std::left << std::setw(14) << "total" << std::fixed << std::setprecision(4) << total << " s\n";
    out.unsetf(std::ios::floatfield);
}

struct TrainArgs {
    std::string data, teacher_dir, out, loss_csv, checkpoint_dir, config, init;
    bool no_kd = false, no_augment = false, json = false;
    std::int64_t epochs = 0, max_steps = 0, checkpoint_every = 50, batch_size = 0, patch_size = 0, stride = 0;
    double alpha = 0.0, lr = 0.0;
    std::uint64_t seed = 0;
    int workers = 1;
};

void cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
    ConfigFile cfg = load_config_or_default(a.config);
    auto& t = cfg.train;
    auto given = [&](const char* flag) { return sub.count(flag) > 0; };
    if (given("--epochs")) t.epochs = a.epochs;
    if (given("--alpha")) t.alpha = a.alpha;
    if (given("--seed")) t.seed = a.seed;
    if (given("--lr")) t.lr0 = a.lr;
    if (given("--batch-size")) t.batch_size = a.batch_size;
    if (given("--patch-size")) t.patch_size = a.patch_size;
    if (given("--stride")) t.stride = a.stride;
    if (given("--max-steps")) t.max_steps = a.max_steps;
    if (given("--workers")) t.workers = a.workers;
    if (given("--checkpoint-every") || a.config.empty()) t.checkpoint_every = a.checkpoint_every;
    if (a.no_kd) t.kd_enabled = false;
    if (a.no_augment) t.augment = false;
    const fs::path out_path = a.out;
    t.checkpoint_dir = a.checkpoint_dir.empty() ? out_path.parent_path() / "checkpoints" : fs::path(a.checkpoint_dir);
    t.loss_csv = a.loss_csv.empty() ? out_path.parent_path() / (out_path.stem().string() + "_loss.csv") : fs::path(a.loss_csv);
    try {
        cfg.model.validate();
        t.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    if (!a.teacher_dir.empty() && !t.kd_enabled) throw UsageError("--teacher-dir has no effect with --no-kd");

    ModelWeights weights;
    ModelConfig model = cfg.model;
    if (!a.init.empty()) {
        auto loaded = load_weights(a.init);
        weights = std::move(loaded.weights);
        model = loaded.config;
    } else {
        weights = build_model(model, t.seed);
    }

    DatasetOptions options;
    options.load_teacher = t.kd_enabled;
    options.teacher_dir = a.teacher_dir;
    options.workers = t.workers;
    const Dataset dataset = load_dataset(a.data, options);
    for (const auto& w : dataset.warnings) err << "warning: " << w << '\n';
    if (t.kd_enabled)
        for (const auto& s : dataset.samples)
            if (!s.bracket.teacher_hdr) throw DatasetError("scene '" + s.name + "' has no teacher prediction; pass --teacher-dir or --no-kd");

    TrainCallbacks callbacks;
    if (!a.json)
        callbacks.on_epoch = [&](const EpochRecord& r) {
            out << "epoch " << r.epoch + 1 << "/" << t.epochs << "  lr " << r.lr << "  loss " << std::setprecision(8) << r.train_loss << std::setprecision(6) << '\n';
        };
    const auto result = train(dataset.samples, std::move(weights), model, t, callbacks);
    save_weights(result.weights, model, out_path);

    if (a.json) {
        json log = json::array();
        for (const auto& r : result.log) log.push_back({{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}});
        json j{{"scenes", dataset.samples.size()}, {"steps", result.steps}, {"epochs", log}, {"weights", out_path.string()}, {"loss_csv", t.loss_csv.string()},
               {"kd_enabled", t.kd_enabled}, {"alpha", t.alpha}, {"seed", t.seed}};
        out << j.dump(2) << '\n';
    } else {
        out << "trained " << result.steps << " steps on " << dataset.samples.size() << " scenes; weights -> " << out_path.string() << ", loss log -> "
            << t.loss_csv.string() << '\n';
    }
}

struct EvalArgs {
    std::string data, weights, csv;
    bool json = false;
    double mu = kDefaultMu;
    int workers = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    if (!(a.mu > 0.0)) throw UsageError("--mu must be positive");
    if (a.workers < 1) throw UsageError("--workers must be >= 1");
    const auto model = load_weights(a.weights);
    DatasetOptions options;
    options.workers = a.workers;
    const Dataset dataset = load_dataset(a.data, options);
    auto report = evaluate(dataset.samples, model.weights, model.config, a.mu, a.workers);
    for (const auto& w : dataset.warnings) err << "warning: " << w << '\n';
    for (const auto& w : report.warnings) err << "warning: " << w << '\n';
    if (report.rows.empty()) {
        err << "error: no valid scenes to evaluate\n";
        return 1;
    }
    if (!a.csv.empty()) write_text(a.csv, report_csv(report));
    if (a.json) {
        json rows = json::array();
        for (const auto& r : report.rows) rows.push_back(metric_row(r));
        out << json{{"rows", rows}, {"mean", metric_row(report.mean)}, {"warnings", report.warnings}}.dump(2) << '\n';
    } else {
        out << report_table(report);
    }
    return 0;
}

struct CostArgs {
    std::int64_t height = 0, width = 0;
    std::string config, csv, weights;
    bool json = false;
    int runs = 500, warmup = 50;
    std::uint64_t seed = 0;
};

void cmd_profile(const CostArgs& a, std::ostream& out) {
    require_even(a.height, a.width);
    const ModelConfig model = load_config_or_default(a.config).model;
    try {
        model.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const auto report = count_macs(model, a.height, a.width);
    if (!a.csv.empty()) write_text(a.csv, report_csv(report));
    out << (a.json ? report_json(report) + "\n" : report_text(report));
}

void cmd_bench(const CostArgs& a, std::ostream& out) {
    require_even(a.height, a.width);
    if (a.runs < 1) throw UsageError("--runs must be >= 1");
    if (a.warmup < 0) throw UsageError("--warmup must be >= 0");
    ModelConfig model = load_config_or_default(a.config).model;
    try {
        model.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    ModelWeights weights;
    if (!a.weights.empty()) {
        auto loaded = load_weights(a.weights);
        weights = std::move(loaded.weights);
        model = loaded.config;
    } else {
        weights = build_model(model, a.seed);
    }
    auto report = count_macs(model, a.height, a.width);
    report.runtime = bench_runtime(weights, model, a.height, a.width, a.runs, a.warmup, a.seed);
    if (!a.csv.empty()) {
        std::ostringstream rows;
        rows << "run,seconds\n" << std::setprecision(17);
        for (std::size_t i = 0; i < report.runtime->timings_s.size(); ++i) rows << i + 1 << ',' << report.runtime->timings_s[i] << '\n';
        write_text(a.csv, rows.str());
    }
    out << (a.json ? report_json(report) + "\n" : report_text(report));
}

}  // namespace

ConfigFile parse_config(const std::string& text) {
    ConfigFile config;
    std::istringstream in(text);
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
        apply_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

ConfigFile read_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path.string() + "'");
    std::stringstream buffer;
    buffer << f.rdbuf();
    try {
        return parse_config(buffer.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-exposure HDR merging: inference, training, evaluation and cost profiling", "cenhdr"};
    app.require_subcommand(1);

    MergeArgs merge;
    auto* merge_cmd = app.add_subcommand("merge", "Merge three exposures into an HDR image");
    merge_cmd->add_option("--inputs", merge.inputs, "Short, medium and long exposure (PNG or PPM)")->required()->expected(3);
    merge_cmd->add_option("--exposures", merge.exposures, "Text file with three EV values")->required();
    merge_cmd->add_option("--weights", merge.weights, "Weight container (.cenh)")->required();
    merge_cmd->add_option("--out", merge.out, "Output PFM")->required();
    merge_cmd->add_option("--tonemapped", merge.tonemapped, "Optional mu-law tone-mapped PNG");
    merge_cmd->add_option("--gamma", merge.gamma, "Gamma for the LDR-to-linear projection")->default_val(kDefaultGamma);
    merge_cmd->add_option("--mu", merge.mu, "mu-law compression")->default_val(kDefaultMu);

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train on a scene directory");
    train_cmd->add_option("--data", tr.data, "Dataset root")->required();
    train_cmd->add_option("--out", tr.out, "Final weight container")->required();
    train_cmd->add_option("--epochs", tr.epochs, "Epochs");
    train_cmd->add_option("--alpha", tr.alpha, "Weight of the ground-truth term of the distillation loss");
    train_cmd->add_option("--teacher-dir", tr.teacher_dir, "Teacher predictions as <dir>/<scene>.pfm");
    train_cmd->add_flag("--no-kd", tr.no_kd, "Plain L1 loss against ground truth; teacher files are not read");
    train_cmd->add_option("--seed", tr.seed, "Seed for initialization, shuffling and augmentation");
    train_cmd->add_option("--config", tr.config, "key = value configuration file");
    train_cmd->add_option("--init", tr.init, "Start from this weight container");
    train_cmd->add_option("--loss-csv", tr.loss_csv, "Per-epoch loss log (default <out>_loss.csv)");
    train_cmd->add_option("--checkpoint-dir", tr.checkpoint_dir, "Checkpoint directory (default <out dir>/checkpoints)");
    train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Epochs between checkpoints, 0 disables")->default_val(50);
    train_cmd->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps");
    train_cmd->add_option("--workers", tr.workers, "Data-loading threads");
    train_cmd->add_option("--batch-size", tr.batch_size, "Patches per step");
    train_cmd->add_option("--patch-size", tr.patch_size, "Training patch side");
    train_cmd->add_option("--stride", tr.stride, "Patch extraction stride");
    train_cmd->add_option("--lr", tr.lr, "Initial learning rate");
    train_cmd->add_flag("--no-augment", tr.no_augment, "Disable flips and rotations");
    train_cmd->add_flag("--json", tr.json, "Print a JSON summary");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score a weight container on scenes with ground truth");
    eval_cmd->add_option("--data", ev.data, "Dataset root")->required();
    eval_cmd->add_option("--weights", ev.weights, "Weight container")->required();
    eval_cmd->add_option("--csv", ev.csv, "Write the report as CSV");
    eval_cmd->add_option("--mu", ev.mu, "mu-law compression")->default_val(kDefaultMu);
    eval_cmd->add_option("--workers", ev.workers, "Scenes evaluated in parallel")->default_val(1);
    eval_cmd->add_flag("--json", ev.json, "Print JSON instead of a table");

    CostArgs prof;
    auto* profile_cmd = app.add_subcommand("profile", "Per-layer parameter and MAC counts");
    profile_cmd->add_option("--height", prof.height, "Input height")->default_val(1060);
    profile_cmd->add_option("--width", prof.width, "Input width")->default_val(1900);
    profile_cmd->add_option("--config", prof.config, "key = value configuration file");
    profile_cmd->add_option("--csv", prof.csv, "Write the per-layer table as CSV");
    profile_cmd->add_flag("--json", prof.json, "Print JSON instead of a table");

    CostArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Time projection, forward pass and tone mapping");
    bench_cmd->add_option("--height", bench.height, "Input height")->default_val(720);
    bench_cmd->add_option("--width", bench.width, "Input width")->default_val(1280);
    bench_cmd->add_option("--runs", bench.runs, "Timed runs")->default_val(500);
    bench_cmd->add_option("--warmup", bench.warmup, "Untimed warm-up runs")->default_val(50);
    bench_cmd->add_option("--weights", bench.weights, "Weight container (default: random weights)");
    bench_cmd->add_option("--config", bench.config, "key = value configuration file");
    bench_cmd->add_option("--seed", bench.seed, "Seed for random weights and inputs")->default_val(0);
    bench_cmd->add_option("--csv", bench.csv, "Write per-run timings as CSV");
    bench_cmd->add_flag("--json", bench.json, "Print JSON instead of a table");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        apply_thread_limit();
        if (merge_cmd->parsed()) cmd_merge(merge, *merge_cmd, out);
        else if (train_cmd->parsed()) cmd_train(tr, *train_cmd, out, err);
        else if (eval_cmd->parsed()) return cmd_eval(ev, out, err);
        else if (profile_cmd->parsed()) cmd_profile(prof, out);
        else if (bench_cmd->parsed()) cmd_bench(bench, out);
        return 0;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace cenhdr::cli
