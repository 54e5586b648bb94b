#include <algorithm>
#include <atomic>
#include <thread>

#include "cenhdr/training.hpp"

namespace cenhdr {

namespace fs = std::filesystem;

namespace {

struct SceneResult {
    std::optional<SceneSample> sample;
    std::string warning;
    std::vector<fs::path> opened;
};

std::optional<fs::path> find_input(const fs::path& dir, int index) {
    for (const char* ext : {".png", ".ppm"}) {
        const fs::path p = dir / ("input_" + std::to_string(index) + ext);
        if (fs::is_regular_file(p)) return p;
    }
    return std::nullopt;
}

SceneResult load_scene(const fs::path& dir, const DatasetOptions& options) {
    SceneResult result;
    const std::string name = dir.filename().string();
    std::array<fs::path, 3> inputs;
    for (int i = 0; i < 3; ++i) {
        const auto p = find_input(dir, i + 1);
        if (!p) {
            result.warning = "scene '" + name + "' skipped: missing input_" + std::to_string(i + 1) + ".(png|ppm)";
            return result;
        }
        inputs[i] = *p;
    }
    const fs::path exposure = dir / "exposure.txt";
    const fs::path gt = dir / "gt.pfm";
    const fs::path teacher = options.teacher_dir.empty() ? dir / "teacher.pfm" : options.teacher_dir / (name + ".pfm");
    for (const auto& required : {exposure, gt})
        if (!fs::is_regular_file(required)) {
            result.warning = "scene '" + name + "' skipped: missing " + required.filename().string();
            return result;
        }

    try {
        SceneSample sample{name, {}};
        for (int i = 0; i < 3; ++i) {
            result.opened.push_back(inputs[i]);
            sample.bracket.ldr[i] = read_ldr(inputs[i]);
        }
        result.opened.push_back(exposure);
        sample.bracket.exposure_times = exposure_times_from_ev(read_exposures(exposure));
        result.opened.push_back(gt);
        sample.bracket.gt_hdr = read_hdr(gt);
        if (options.load_teacher && fs::is_regular_file(teacher)) {
            result.opened.push_back(teacher);
            sample.bracket.teacher_hdr = read_hdr(teacher);
        }
        sample.bracket.validate();
        result.sample = std::move(sample);
    } catch (const Error& e) {
        result.warning = "scene '" + name + "' skipped: " + e.what();
    }
    return result;
}

}  // namespace

Dataset load_dataset(const fs::path& root, const DatasetOptions& options) {
    if (!fs::is_directory(root)) throw DatasetError("dataset root '" + root.string() + "' is not a directory");
    std::vector<fs::path> scenes;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) scenes.push_back(entry.path());
    std::sort(scenes.begin(), scenes.end());

    std::vector<SceneResult> results(scenes.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < scenes.size(); i = next++) results[i] = load_scene(scenes[i], options);
    };
    const int threads = std::clamp<int>(options.workers, 1, static_cast<int>(std::max<std::size_t>(1, scenes.size())));
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();

    Dataset dataset;
    for (auto& r : results) {
        dataset.opened_files.insert(dataset.opened_files.end(), r.opened.begin(), r.opened.end());
        if (r.sample) {
            dataset.samples.push_back(std::move(*r.sample));
        } else {
            dataset.warnings.push_back(std::move(r.warning));
        }
    }
    if (dataset.samples.empty())
        throw DatasetError("no usable scenes under '" + root.string() + "' (" + std::to_string(dataset.warnings.size()) + " skipped)");
    return dataset;
}

}  // namespace cenhdr
