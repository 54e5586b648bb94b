#include <atomic>
#include <cmath>
#include <thread>

#include "cenhdr/training.hpp"
#include "cenhdr/weights_io.hpp"

namespace cenhdr {

namespace {

struct PatchRef {
    std::size_t sample;
    PatchWindow window;
};

struct PreparedItem {
    AssembledInputs inputs;
    Tensor gt;
    std::optional<Tensor> teacher;
};

// Fisher-Yates driven by raw 64-bit draws so the order does not depend on the
// standard library's distribution implementations.
template <typename V>
void shuffle(std::vector<V>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng() % i]);
}

Tensor stack(const std::vector<const Tensor*>& parts) {
    const Shape s = parts.front()->shape();
    Tensor out({static_cast<std::int64_t>(parts.size()) * s.n, s.c, s.h, s.w});
    auto dst = out.data().begin();
    for (const Tensor* p : parts) dst = std::copy(p->data().begin(), p->data().end(), dst);
    return out;
}

template <typename F>
void parallel_for(std::size_t count, int workers, F&& fn) {
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next++; i < count; i = next++) fn(i);
    };
    std::vector<std::jthread> pool;
    const int threads = std::clamp<int>(workers, 1, static_cast<int>(std::max<std::size_t>(count, 1)));
    for (int t = 1; t < threads; ++t) pool.emplace_back(run);
    run();
}

Batch make_batch(const std::vector<SceneSample>& samples, const std::vector<PatchRef>& refs, const std::vector<Augmentation>& augs, const ModelConfig& model,
                 const TrainConfig& config) {
    std::vector<PreparedItem> items(refs.size());
    std::vector<std::string> errors(refs.size());
    parallel_for(refs.size(), config.workers, [&](std::size_t i) {
        try {
            ExposureBracket patch = crop_patch(samples[refs[i].sample].bracket, refs[i].window, config.patch_size);
            if (config.augment) patch = augment(patch, augs[i]);
            items[i].inputs = assemble_inputs(patch, model.gamma);
            items[i].gt = std::move(*patch.gt_hdr);
            if (config.kd_enabled) items[i].teacher = std::move(*patch.teacher_hdr);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw Error("preparing batch: " + e);

    Batch batch;
    std::vector<const Tensor*> parts(items.size());
    for (int f = 0; f < 3; ++f) {
        for (std::size_t i = 0; i < items.size(); ++i) parts[i] = &items[i].inputs.inputs[f];
        batch.inputs[f] = stack(parts);
    }
    for (std::size_t i = 0; i < items.size(); ++i) parts[i] = &items[i].gt;
    batch.gt = stack(parts);
    if (config.kd_enabled) {
        for (std::size_t i = 0; i < items.size(); ++i) parts[i] = &*items[i].teacher;
        batch.teacher = stack(parts);
    }
    return batch;
}

std::string checkpoint_name(std::int64_t epoch) {
    std::string digits = std::to_string(epoch);
    return "checkpoint_epoch_" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits + ".cenh";
}

}  // namespace

TrainResult train(const std::vector<SceneSample>& samples, ModelWeights weights, const ModelConfig& model, const TrainConfig& config,
                  const TrainCallbacks& callbacks) {
    config.validate();
    model.validate();
    validate_weights(weights, model);
    if (samples.empty()) throw DatasetError("training needs at least one scene");

    std::vector<PatchRef> patches;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& b = samples[s].bracket;
        if (!b.gt_hdr) throw DatasetError("scene '" + samples[s].name + "' has no ground truth");
        if (config.kd_enabled && !b.teacher_hdr) throw ConfigError("knowledge distillation is enabled but scene '" + samples[s].name + "' has no teacher prediction");
        for (const auto& w : patch_windows(b.height(), b.width(), config.patch_size, config.stride)) patches.push_back({s, w});
    }
    if (config.checkpoint_every > 0) std::filesystem::create_directories(config.checkpoint_dir);

    std::mt19937_64 rng(config.seed);
    AdamState<float> adam;
    TrainResult result;
    bool stop = false;
    for (std::int64_t epoch = 0; epoch < config.epochs && !stop; ++epoch) {
        const double lr = lr_at(epoch, config);
        shuffle(patches, rng);
        double epoch_sum = 0.0;
        std::int64_t epoch_steps = 0;
        for (std::size_t start = 0; start < patches.size() && !stop; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(patches.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::vector<PatchRef> refs(patches.begin() + static_cast<std::ptrdiff_t>(start), patches.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<Augmentation> augs(refs.size());
            if (config.augment)
                for (auto& a : augs) a = draw_augmentation(rng);
            const Batch batch = make_batch(samples, refs, augs, model, config);

            ad::Tape<float> tape;
            const auto pred = forward(tape, batch.inputs, weights, model);
            const auto gt = tape.constant(batch.gt);
            std::optional<ad::Var<float>> teacher;
            if (batch.teacher) teacher = tape.constant(*batch.teacher);
            const auto loss = kd_loss(pred, gt, teacher ? &*teacher : nullptr, config.alpha, config.mu, config.kd_enabled);
            const double value = loss.value()[0];
            const std::int64_t step = result.steps + 1;
            if (!std::isfinite(value))
                throw NumericError("non-finite training loss (" + std::to_string(value) + ") at step " + std::to_string(step) + ", epoch " + std::to_string(epoch), step);
            const auto grads = ad::backward(tape, loss);

            if (callbacks.on_step) {
                const StepInfo info{epoch, step, lr, value, &batch, &weights};
                if (!callbacks.on_step(info)) stop = true;
            }
            adam_step(weights, grads, adam, lr);
            result.steps = step;
            result.step_losses.push_back(value);
            epoch_sum += value;
            ++epoch_steps;
            if (config.max_steps > 0 && result.steps >= config.max_steps) stop = true;
        }
        const EpochRecord record{epoch, lr, epoch_sum / static_cast<double>(std::max<std::int64_t>(epoch_steps, 1))};
        result.log.push_back(record);
        if (callbacks.on_epoch) callbacks.on_epoch(record);
        if (!config.loss_csv.empty()) write_loss_csv(result.log, config.loss_csv);
        if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0)
            save_weights(weights, model, config.checkpoint_dir / checkpoint_name(epoch + 1));
    }
    result.weights = std::move(weights);
    return result;
}

}  // namespace cenhdr
