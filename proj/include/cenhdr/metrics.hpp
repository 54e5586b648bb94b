#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cenhdr/model.hpp"
#include "cenhdr/pipeline.hpp"
#include "cenhdr/training.hpp"

namespace cenhdr {

/// 10 log10(peak^2 / MSE) over all elements; +inf when MSE is 0.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
double mu_psnr(const Tensor& a, const Tensor& b, double mu = kDefaultMu);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Mean SSIM over valid window positions of the channel-mean grayscale images.
double ssim(const Tensor& a, const Tensor& b, const SsimParams& params = {});
double mu_ssim(const Tensor& a, const Tensor& b, double mu = kDefaultMu, const SsimParams& params = {});

struct MetricRow {
    std::string scene;
    double mu_psnr = 0.0;
    double psnr = 0.0;
    double mu_ssim = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    MetricRow mean;  // scene = "mean"
    std::vector<std::string> warnings;
};

MetricRow score(const std::string& scene, const Tensor& prediction, const Tensor& gt, double mu = kDefaultMu);
MetricReport summarize(std::vector<MetricRow> rows);

using Predictor = std::function<Tensor(const ExposureBracket&)>;

/// Scores predictor(bracket) against each scene's ground truth. Scenes
/// without ground truth are skipped with a warning.
MetricReport evaluate(const std::vector<SceneSample>& scenes, const Predictor& predictor, double mu = kDefaultMu, int workers = 1);
MetricReport evaluate(const std::vector<SceneSample>& scenes, const ModelWeights& weights, const ModelConfig& config, double mu = kDefaultMu, int workers = 1);

/// scene,mu_psnr,psnr,mu_ssim,ssim with the mean as the last row.
std::string report_csv(const MetricReport& report);
std::string report_table(const MetricReport& report);

/// "inf" / "-inf" / "nan" or the value with `precision` decimals.
std::string format_metric(double value, int precision = 4);

}  // namespace cenhdr
