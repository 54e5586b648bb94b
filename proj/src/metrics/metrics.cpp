#include "cenhdr/metrics.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

namespace cenhdr {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw DimensionError(op, "shape", a.shape().str() + " vs " + b.shape().str());
    if (a.numel() == 0) throw DimensionError(op, "elements", "empty image");
}

// Per-pixel channel mean, one plane per image in the batch: (n, h, w) flattened.
std::vector<double> grayscale(const Tensor& t) {
    const Shape& s = t.shape();
    std::vector<double> g(static_cast<std::size_t>(s.n * s.h * s.w), 0.0);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t x = 0; x < s.w; ++x) g[static_cast<std::size_t>((n * s.h + y) * s.w + x)] += t.at(n, c, y, x);
    for (auto& v : g) v /= static_cast<double>(s.c);
    return g;
}

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double centre = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) total += w[i] = std::exp(-((i - centre) * (i - centre)) / (2.0 * sigma * sigma));
    for (auto& v : w) v /= total;
    return w;
}

// Separable "valid" filtering of an h x w plane.
std::vector<double> filter_valid(const double* plane, std::int64_t h, std::int64_t w, const std::vector<double>& k) {
    const auto ks = static_cast<std::int64_t>(k.size());
    const std::int64_t ho = h - ks + 1, wo = w - ks + 1;
    std::vector<double> rows(static_cast<std::size_t>(h * wo));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < ks; ++i) acc += k[i] * plane[y * w + x + i];
            rows[static_cast<std::size_t>(y * wo + x)] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(ho * wo));
    for (std::int64_t y = 0; y < ho; ++y)
        for (std::int64_t x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < ks; ++i) acc += k[i] * rows[static_cast<std::size_t>((y + i) * wo + x)];
            out[static_cast<std::size_t>(y * wo + x)] = acc;
        }
    return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
    require_same(a, b, "psnr");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double mu_psnr(const Tensor& a, const Tensor& b, double mu) { return psnr(mu_law(a, mu), mu_law(b, mu)); }

double ssim(const Tensor& a, const Tensor& b, const SsimParams& p) {
    require_same(a, b, "ssim");
    const Shape& s = a.shape();
    if (s.h < p.window || s.w < p.window)
        throw DimensionError("ssim", s.h < p.window ? "height" : "width", "image " + s.str() + " is smaller than the " + std::to_string(p.window) + "x" + std::to_string(p.window) + " window");
    const auto ga = grayscale(a), gb = grayscale(b);
    const auto k = gaussian_window(p.window, p.sigma);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    const std::size_t plane = static_cast<std::size_t>(s.h * s.w);
    std::vector<double> aa(plane), bb(plane), ab(plane);
    double total = 0.0;
    std::size_t count = 0;
    for (std::int64_t n = 0; n < s.n; ++n) {
        const double* pa = ga.data() + n * plane;
        const double* pb = gb.data() + n * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto mu_a = filter_valid(pa, s.h, s.w, k), mu_b = filter_valid(pb, s.h, s.w, k);
        const auto e_aa = filter_valid(aa.data(), s.h, s.w, k), e_bb = filter_valid(bb.data(), s.h, s.w, k), e_ab = filter_valid(ab.data(), s.h, s.w, k);
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double va = e_aa[i] - mu_a[i] * mu_a[i];
            const double vb = e_bb[i] - mu_b[i] * mu_b[i];
            const double cov = e_ab[i] - mu_a[i] * mu_b[i];
            total += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) / ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        count += mu_a.size();
    }
    return total / static_cast<double>(count);
}

double mu_ssim(const Tensor& a, const Tensor& b, double mu, const SsimParams& params) { return ssim(mu_law(a, mu), mu_law(b, mu), params); }

MetricRow score(const std::string& scene, const Tensor& prediction, const Tensor& gt, double mu) {
    return {scene, mu_psnr(prediction, gt, mu), psnr(prediction, gt), mu_ssim(prediction, gt, mu), ssim(prediction, gt)};
}

MetricReport summarize(std::vector<MetricRow> rows) {
    MetricReport report;
    report.rows = std::move(rows);
    report.mean.scene = "mean";
    if (report.rows.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        report.mean.mu_psnr = report.mean.psnr = report.mean.mu_ssim = report.mean.ssim = nan;
        return report;
    }
    for (const auto& r : report.rows) {
        report.mean.mu_psnr += r.mu_psnr;
        report.mean.psnr += r.psnr;
        report.mean.mu_ssim += r.mu_ssim;
        report.mean.ssim += r.ssim;
    }
    const double n = static_cast<double>(report.rows.size());
    report.mean.mu_psnr /= n;
    report.mean.psnr /= n;
    report.mean.mu_ssim /= n;
    report.mean.ssim /= n;
    return report;
}

MetricReport evaluate(const std::vector<SceneSample>& scenes, const Predictor& predictor, double mu, int workers) {
    std::vector<std::optional<MetricRow>> rows(scenes.size());
    std::vector<std::string> errors(scenes.size());
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next++; i < scenes.size(); i = next++) {
            const auto& s = scenes[i];
            if (!s.bracket.gt_hdr) {
                errors[i] = "scene '" + s.name + "' skipped: no ground truth";
                continue;
            }
            try {
                rows[i] = score(s.name, predictor(s.bracket), *s.bracket.gt_hdr, mu);
            } catch (const Error& e) {
                errors[i] = "scene '" + s.name + "' skipped: " + e.what();
            }
        }
    };
    std::vector<std::jthread> pool;
    for (int t = 1; t < std::min<int>(workers, static_cast<int>(scenes.size())); ++t) pool.emplace_back(run);
    run();
    pool.clear();

    std::vector<MetricRow> valid;
    std::vector<std::string> warnings;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (rows[i]) valid.push_back(*rows[i]);
        if (!errors[i].empty()) warnings.push_back(errors[i]);
    }
    auto report = summarize(std::move(valid));
    report.warnings = std::move(warnings);
    return report;
}

MetricReport evaluate(const std::vector<SceneSample>& scenes, const ModelWeights& weights, const ModelConfig& config, double mu, int workers) {
    validate_weights(weights, config);
    return evaluate(scenes, [&](const ExposureBracket& b) { return merge_bracket(b, weights, config); }, mu, workers);
}

std::string format_metric(double value, int precision) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, value);
    return buf;
}

std::string report_csv(const MetricReport& report) {
    std::ostringstream out;
    out << "scene,mu_psnr,psnr,mu_ssim,ssim\n";
    auto row = [&](const MetricRow& r) {
        out << r.scene << ',' << format_metric(r.mu_psnr, 6) << ',' << format_metric(r.psnr, 6) << ',' << format_metric(r.mu_ssim, 6) << ','
            << format_metric(r.ssim, 6) << '\n';
    };
    for (const auto& r : report.rows) row(r);
    row(report.mean);
    return out.str();
}

std::string report_table(const MetricReport& report) {
    std::size_t width = 5;
    for (const auto& r : report.rows) width = std::max(width, r.scene.size());
    auto pad = [](const std::string& s, std::size_t w, bool left) {
        const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
        return left ? s + fill : fill + s;
    };
    std::ostringstream out;
    auto line = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d, const std::string& e) {
        out << pad(a, width, true) << "  " << pad(b, 10, false) << "  " << pad(c, 10, false) << "  " << pad(d, 10, false) << "  " << pad(e, 10, false) << '\n';
    };
    line("scene", "mu-PSNR", "PSNR", "mu-SSIM", "SSIM");
    auto row = [&](const MetricRow& r) { line(r.scene, format_metric(r.mu_psnr, 2), format_metric(r.psnr, 2), format_metric(r.mu_ssim, 4), format_metric(r.ssim, 4)); };
    for (const auto& r : report.rows) row(r);
    out << std::string(width + 48, '-') << '\n';
    row(report.mean);
    return out.str();
}

}  // namespace cenhdr
