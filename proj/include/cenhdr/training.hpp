#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cenhdr/model.hpp"
#include "cenhdr/pipeline.hpp"

namespace cenhdr {

// ---- dataset ----

struct SceneSample {
    std::string name;
    ExposureBracket bracket;  // gt_hdr always set; teacher_hdr when loaded
};

struct DatasetOptions {
    bool load_teacher = false;  // when false no teacher file is ever touched
    std::filesystem::path teacher_dir;  // teachers at <teacher_dir>/<scene>.pfm; empty = <scene>/teacher.pfm
    int workers = 1;
};

struct Dataset {
    std::vector<SceneSample> samples;
    std::vector<std::string> warnings;                // one per skipped scene
    std::vector<std::filesystem::path> opened_files;  // every file read, in scene order
};

/// Loads `<root>/<scene>/{input_1,input_2,input_3}.(png|ppm)`, exposure.txt,
/// gt.pfm and optionally the teacher prediction. Scenes are sorted by name; incomplete
/// ones are skipped with a warning. Throws DatasetError if nothing loads.
Dataset load_dataset(const std::filesystem::path& root, const DatasetOptions& options = {});

// ---- patches and augmentation ----

struct PatchWindow {
    std::int64_t y = 0;
    std::int64_t x = 0;
    friend bool operator==(const PatchWindow&, const PatchWindow&) = default;
};

/// Window origins along one axis: the stride grid plus a final origin snapped
/// to `extent - patch` when the grid leaves a remainder.
std::vector<std::int64_t> patch_origins(std::int64_t extent, std::int64_t patch, std::int64_t stride);
/// Row-major product of the per-axis origins. Axes shorter than `patch`
/// contribute the single origin 0.
std::vector<PatchWindow> patch_windows(std::int64_t height, std::int64_t width, std::int64_t patch, std::int64_t stride);

/// patch x patch crop of every raster in `bracket`. Images smaller than the
/// patch are reflection-padded up to it.
ExposureBracket crop_patch(const ExposureBracket& bracket, PatchWindow window, std::int64_t patch);
std::vector<ExposureBracket> extract_patches(const ExposureBracket& bracket, std::int64_t patch = 256, std::int64_t stride = 128);

struct Augmentation {
    bool flip = false;  // horizontal mirror, applied first
    int rotations = 0;  // counter-clockwise quarter turns, 0..3
};

Augmentation draw_augmentation(std::mt19937_64& rng);
Tensor apply_augmentation(const Tensor& image, Augmentation a);
/// Same transform for every raster of the bracket. Requires square rasters.
ExposureBracket augment(const ExposureBracket& bracket, Augmentation a);
ExposureBracket augment(const ExposureBracket& bracket, std::mt19937_64& rng);

// ---- loss and schedule ----

/// alpha * L1(T(pred), T(gt)) + (1 - alpha) * L1(T(pred), T(teacher)), or
/// L1(T(pred), T(gt)) when `teacher` is null and KD is off. A null teacher with
/// kd_enabled raises ConfigError.
double kd_loss(const Tensor& pred, const Tensor& gt, const Tensor* teacher, double alpha, double mu, bool kd_enabled = true);
template <typename T>
ad::Var<T> kd_loss(ad::Var<T> pred, ad::Var<T> gt, const ad::Var<T>* teacher, double alpha, double mu, bool kd_enabled = true);

struct TrainConfig {
    std::int64_t patch_size = 256;
    std::int64_t stride = 128;
    std::int64_t batch_size = 8;
    std::int64_t epochs = 500;
    double lr0 = 1e-4;
    std::int64_t lr_fixed_epochs = 80;
    double lr_decay = 0.8;
    std::int64_t lr_decay_every = 20;
    double alpha = 0.2;
    bool kd_enabled = true;
    double mu = kDefaultMu;
    std::uint64_t seed = 0;

    bool augment = true;
    std::int64_t max_steps = 0;         // stop after this many steps; 0 = no limit
    std::int64_t checkpoint_every = 0;  // epochs; 0 = off
    std::filesystem::path checkpoint_dir;
    std::filesystem::path loss_csv;  // empty = no file
    int workers = 1;

    /// Throws ConfigError on invalid values.
    void validate() const;
};

/// lr0 for epochs [0, lr_fixed_epochs), then
/// lr0 * decay^(1 + floor((epoch - lr_fixed_epochs) / lr_decay_every)).
double lr_at(std::int64_t epoch, const TrainConfig& config);

// ---- training loop ----

struct Batch {
    std::array<Tensor, 3> inputs;  // (B, 6, P, P)
    Tensor gt;                     // (B, 3, P, P)
    std::optional<Tensor> teacher;
};

struct StepInfo {
    std::int64_t epoch = 0;
    std::int64_t step = 0;  // 1-based, global
    double lr = 0.0;
    double loss = 0.0;
    const Batch* batch = nullptr;
    const ModelWeights* weights_before = nullptr;  // weights the loss was computed with
};

struct EpochRecord {
    std::int64_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;  // mean step loss over the epoch
    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainCallbacks {
    std::function<bool(const StepInfo&)> on_step;  // return false to stop
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    ModelWeights weights;
    std::vector<EpochRecord> log;
    std::vector<double> step_losses;
    std::int64_t steps = 0;
};

/// Mini-batch Adam on shuffled patches of `samples`. Batches and augmentation
/// draws depend only on config.seed, not on config.workers.
TrainResult train(const std::vector<SceneSample>& samples, ModelWeights weights, const ModelConfig& model, const TrainConfig& config,
                  const TrainCallbacks& callbacks = {});

/// Writes `epoch,lr,train_loss` rows with round-trip precision.
void write_loss_csv(const std::vector<EpochRecord>& log, const std::filesystem::path& path);

}  // namespace cenhdr
