#include <cmath>
#include <fstream>

#include "cenhdr/kernels.hpp"
#include "cenhdr/training.hpp"

namespace cenhdr {

namespace {

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
}

}  // namespace

double kd_loss(const Tensor& pred, const Tensor& gt, const Tensor* teacher, double alpha, double mu, bool kd_enabled) {
    check_alpha(alpha);
    if (kd_enabled && teacher == nullptr) throw ConfigError("knowledge distillation is enabled but no teacher prediction was given");
    const Tensor tp = mu_law(pred, mu);
    const double gt_term = kernels::l1_loss(tp, mu_law(gt, mu));
    if (!kd_enabled) return gt_term;
    const double teacher_term = kernels::l1_loss(tp, mu_law(*teacher, mu));
    return alpha * gt_term + (1.0 - alpha) * teacher_term;
}

template <typename T>
ad::Var<T> kd_loss(ad::Var<T> pred, ad::Var<T> gt, const ad::Var<T>* teacher, double alpha, double mu, bool kd_enabled) {
    check_alpha(alpha);
    if (kd_enabled && teacher == nullptr) throw ConfigError("knowledge distillation is enabled but no teacher prediction was given");
    const auto tp = ad::mu_law(pred, mu);
    const auto gt_term = ad::l1_loss(tp, ad::mu_law(gt, mu));
    if (!kd_enabled) return gt_term;
    return ad::weighted_sum(gt_term, alpha, ad::l1_loss(tp, ad::mu_law(*teacher, mu)), 1.0 - alpha);
}

template ad::Var<float> kd_loss(ad::Var<float>, ad::Var<float>, const ad::Var<float>*, double, double, bool);
template ad::Var<double> kd_loss(ad::Var<double>, ad::Var<double>, const ad::Var<double>*, double, double, bool);

void TrainConfig::validate() const {
    auto positive = [](std::int64_t v, const char* what) {
        if (v < 1) throw ConfigError(std::string(what) + " must be positive, got " + std::to_string(v));
    };
    positive(patch_size, "patch_size");
    positive(stride, "stride");
    positive(batch_size, "batch_size");
    positive(epochs, "epochs");
    positive(lr_decay_every, "lr_decay_every");
    positive(workers, "workers");
    if (patch_size % 2 != 0) throw ConfigError("patch_size must be even, got " + std::to_string(patch_size));
    if (lr_fixed_epochs < 0) throw ConfigError("lr_fixed_epochs must be >= 0");
    if (max_steps < 0 || checkpoint_every < 0) throw ConfigError("max_steps and checkpoint_every must be >= 0");
    if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (!(mu > 0.0)) throw ConfigError("mu must be positive");
    check_alpha(alpha);
    if (checkpoint_every > 0 && checkpoint_dir.empty()) throw ConfigError("checkpoint_every needs a checkpoint directory");
}

double lr_at(std::int64_t epoch, const TrainConfig& config) {
    if (epoch < config.lr_fixed_epochs) return config.lr0;
    const std::int64_t decays = 1 + (epoch - config.lr_fixed_epochs) / config.lr_decay_every;
    return config.lr0 * std::pow(config.lr_decay, static_cast<double>(decays));
}

void write_loss_csv(const std::vector<EpochRecord>& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.precision(17);
    out << "epoch,lr,train_loss\n";
    for (const auto& r : log) out << r.epoch << ',' << r.lr << ',' << r.train_loss << '\n';
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace cenhdr
