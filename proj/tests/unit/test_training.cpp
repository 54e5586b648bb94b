#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "cenhdr/training.hpp"
#include "cenhdr/weights_io.hpp"
#include "synthetic.hpp"
#include "test_support.hpp"

using namespace cenhdr;
using cenhdr::testing::random_tensor;
using cenhdr::testing::synthetic_bracket;
using cenhdr::testing::write_scene;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("cenhdr_test_training_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ModelConfig toy_model() {
    ModelConfig c;
    c.encoder1_channels = 4;
    c.encoder2_channels = 8;
    c.merge_channels = 16;
    c.scram_spatial_channels = 3;
    c.scram_hidden = {6, 6, 6};
    return c;
}

TrainConfig toy_train() {
    TrainConfig t;
    t.patch_size = 16;
    t.stride = 16;
    t.batch_size = 2;
    t.epochs = 3;
    t.lr0 = 1e-3;
    t.kd_enabled = false;
    t.seed = 5;
    return t;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Mean |T(a) - T(b)| computed directly from the closed form of the mu-law.
double mu_l1(const Tensor& a, const Tensor& b, double mu) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        acc += std::abs(std::log(1.0 + mu * a[i]) / std::log(1.0 + mu) - std::log(1.0 + mu * b[i]) / std::log(1.0 + mu));
    return acc / static_cast<double>(a.data().size());
}

}  // namespace

TEST_CASE("learning rate schedule") {
    const TrainConfig c;
    CHECK(lr_at(0, c) == 1e-4);
    CHECK(lr_at(79, c) == 1e-4);
    CHECK(lr_at(80, c) == doctest::Approx(8e-5).epsilon(1e-12));
    CHECK(lr_at(99, c) == doctest::Approx(8e-5).epsilon(1e-12));
    CHECK(lr_at(100, c) == doctest::Approx(6.4e-5).epsilon(1e-12));
    CHECK(lr_at(120, c) == doctest::Approx(5.12e-5).epsilon(1e-12));
    for (std::int64_t e = 1; e < 500; ++e) CHECK(lr_at(e, c) <= lr_at(e - 1, c));
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.patch_size = 255;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.alpha = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.checkpoint_every = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("patch grid") {
    CHECK(patch_origins(256, 256, 128) == std::vector<std::int64_t>{0});
    CHECK(patch_origins(384, 256, 128) == std::vector<std::int64_t>{0, 128});
    CHECK(patch_windows(256, 256, 256, 128).size() == 1);
    CHECK(patch_windows(384, 384, 256, 128).size() == 4);
    CHECK(patch_origins(300, 256, 128) == std::vector<std::int64_t>{0, 44});
    CHECK(patch_origins(100, 256, 128) == std::vector<std::int64_t>{0});
}

TEST_CASE("patch count matches brute-force window enumeration") {
    for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{1000, 1500}, {257, 700}, {512, 512}, {1060, 1900}}) {
        // Every start position on the stride grid that fits, plus the flush-right/bottom window.
        auto axis = [](std::int64_t extent) {
            std::set<std::int64_t> s;
            for (std::int64_t p = 0; p + 256 <= extent; ++p)
                if (p % 128 == 0 || p == extent - 256) s.insert(p);
            return s;
        };
        const auto ys = axis(h), xs = axis(w);
        const auto windows = patch_windows(h, w, 256, 128);
        CHECK(windows.size() == ys.size() * xs.size());
        std::vector<char> covered(static_cast<std::size_t>(h * w), 0);
        for (const auto& win : windows) {
            CHECK(ys.contains(win.y));
            CHECK(xs.contains(win.x));
            for (std::int64_t y = win.y; y < win.y + 256; ++y)
                for (std::int64_t x = win.x; x < win.x + 256; ++x) covered[static_cast<std::size_t>(y * w + x)] = 1;
        }
        CHECK(std::all_of(covered.begin(), covered.end(), [](char c) { return c == 1; }));
    }
}

TEST_CASE("extract_patches crops every raster with the same window") {
    auto b = synthetic_bracket(40, 24, 3);
    b.teacher_hdr = random_tensor({1, 3, 40, 24}, 4, 0.0, 1.0);
    const auto patches = extract_patches(b, 16, 8);
    CHECK(patches.size() == patch_windows(40, 24, 16, 8).size());
    const auto& p = patches[3];
    const auto w = patch_windows(40, 24, 16, 8)[3];
    for (int c = 0; c < 3; ++c) {
        CHECK(p.ldr[0].at(0, c, 2, 5) == b.ldr[0].at(0, c, w.y + 2, w.x + 5));
        CHECK(p.gt_hdr->at(0, c, 2, 5) == b.gt_hdr->at(0, c, w.y + 2, w.x + 5));
        CHECK(p.teacher_hdr->at(0, c, 2, 5) == b.teacher_hdr->at(0, c, w.y + 2, w.x + 5));
    }
}

TEST_CASE("images smaller than the patch become one padded sample") {
    const auto b = synthetic_bracket(10, 6, 5);
    const auto patches = extract_patches(b, 16, 8);
    REQUIRE(patches.size() == 1);
    const auto& p = patches[0];
    CHECK(p.ldr[1].shape() == Shape{1, 3, 16, 16});
    CHECK(p.ldr[1].at(0, 0, 9, 5) == b.ldr[1].at(0, 0, 9, 5));
    CHECK(p.ldr[1].at(0, 0, 10, 6) == b.ldr[1].at(0, 0, 8, 4));
}

TEST_CASE("augmentation") {
    const auto b = synthetic_bracket(8, 8, 6);
    const auto same = augment(b, Augmentation{});
    for (int i = 0; i < 3; ++i) CHECK(same.ldr[i] == b.ldr[i]);

    const Augmentation half{false, 2};
    const auto twice = augment(augment(b, half), half);
    for (int i = 0; i < 3; ++i) CHECK(twice.ldr[i] == b.ldr[i]);
    CHECK(*twice.gt_hdr == *b.gt_hdr);

    // Four quarter turns and two flips are identities.
    Tensor t = random_tensor({1, 3, 5, 5}, 7);
    Tensor r = t;
    for (int k = 0; k < 4; ++k) r = apply_augmentation(r, {false, 1});
    CHECK(r == t);
    CHECK(apply_augmentation(apply_augmentation(t, {true, 0}), {true, 0}) == t);

    // Counter-clockwise quarter turn moves the top-right corner to the top-left.
    CHECK(apply_augmentation(t, {false, 1}).at(0, 0, 0, 0) == t.at(0, 0, 0, 4));
    CHECK(apply_augmentation(t, {true, 0}).at(0, 1, 2, 0) == t.at(0, 1, 2, 4));
    // Flip first, then rotate.
    CHECK(apply_augmentation(t, {true, 1}).at(0, 0, 0, 0) == t.at(0, 0, 0, 0));
    CHECK_THROWS_AS(apply_augmentation(Tensor({1, 3, 4, 6}), {false, 1}), DimensionError);
}

TEST_CASE("augmentation applies one transform to every image and keeps pixel multisets") {
    std::mt19937_64 rng(11);
    ExposureBracket b;
    // Tag pixel (0, 0) of each raster so its destination can be traced.
    for (int i = 0; i < 3; ++i) {
        b.ldr[i] = random_tensor({1, 3, 6, 6}, 20 + i, 0.0, 0.5);
        b.ldr[i].at(0, 0, 0, 0) = 0.9f;
    }
    b.gt_hdr = random_tensor({1, 3, 6, 6}, 30, 0.0, 0.5);
    b.gt_hdr->at(0, 0, 0, 0) = 0.9f;
    for (int trial = 0; trial < 16; ++trial) {
        const auto a = draw_augmentation(rng);
        const auto out = augment(b, a);
        auto where = [](const Tensor& t) {
            for (std::int64_t y = 0; y < 6; ++y)
                for (std::int64_t x = 0; x < 6; ++x)
                    if (t.at(0, 0, y, x) == 0.9f) return std::pair{y, x};
            return std::pair<std::int64_t, std::int64_t>{-1, -1};
        };
        const auto dest = where(*out.gt_hdr);
        for (int i = 0; i < 3; ++i) {
            CHECK(where(out.ldr[i]) == dest);
            auto before = std::vector<float>(b.ldr[i].data().begin(), b.ldr[i].data().end());
            auto after = std::vector<float>(out.ldr[i].data().begin(), out.ldr[i].data().end());
            std::sort(before.begin(), before.end());
            std::sort(after.begin(), after.end());
            CHECK(before == after);
        }
    }
}

TEST_CASE("kd loss") {
    const Tensor one({1, 3, 2, 2}, 1.0f), zero({1, 3, 2, 2}, 0.0f);
    const auto x = random_tensor({1, 3, 4, 4}, 1, 0.0, 1.0);
    CHECK(kd_loss(x, x, &x, 0.2, kDefaultMu) == 0.0);
    CHECK(kd_loss(one, zero, &one, 0.2, kDefaultMu) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK_THROWS_AS(kd_loss(one, zero, nullptr, 0.2, kDefaultMu), ConfigError);
    CHECK(kd_loss(one, zero, nullptr, 0.2, kDefaultMu, false) == doctest::Approx(1.0).epsilon(1e-12));

    const auto gt = random_tensor({2, 3, 4, 4}, 2, 0.0, 1.0);
    const auto teacher = random_tensor({2, 3, 4, 4}, 3, 0.0, 1.0);
    const auto pred = random_tensor({2, 3, 4, 4}, 4, 0.0, 1.0);
    const double l1 = kd_loss(pred, gt, &teacher, 1.0, kDefaultMu);
    const double l0 = kd_loss(pred, gt, &teacher, 0.0, kDefaultMu);
    CHECK(std::abs(l1 - mu_l1(pred, gt, kDefaultMu)) <= 1e-6);
    CHECK(std::abs(l0 - mu_l1(pred, teacher, kDefaultMu)) <= 1e-6);
    for (double alpha : {0.1, 0.2, 0.5, 0.9}) CHECK(std::abs(kd_loss(pred, gt, &teacher, alpha, kDefaultMu) - (alpha * l1 + (1 - alpha) * l0)) <= 1e-6);

    ad::Tape<float> tape;
    const auto vp = tape.constant(pred), vg = tape.constant(gt), vt = tape.constant(teacher);
    CHECK(kd_loss(vp, vg, &vt, 0.2, kDefaultMu).value()[0] == doctest::Approx(kd_loss(pred, gt, &teacher, 0.2, kDefaultMu)).epsilon(1e-6));
    CHECK(kd_loss<float>(vp, vg, nullptr, 0.2, kDefaultMu, false).value()[0] == doctest::Approx(l1).epsilon(1e-6));
}

TEST_CASE("dataset loading") {
    const auto root = fresh_dir("dataset");
    write_scene(root / "scene_a", synthetic_bracket(12, 10, 1), true);
    write_scene(root / "scene_b", synthetic_bracket(12, 10, 2), false, false);
    write_scene(root / "scene_c", synthetic_bracket(12, 10, 3), true);
    fs::remove(root / "scene_c" / "exposure.txt");

    const auto ds = load_dataset(root);
    REQUIRE(ds.samples.size() == 2);
    CHECK(ds.samples[0].name == "scene_a");
    CHECK(ds.samples[1].name == "scene_b");
    REQUIRE(ds.warnings.size() == 1);
    CHECK(ds.warnings[0].find("scene_c") != std::string::npos);
    CHECK(ds.warnings[0].find("exposure.txt") != std::string::npos);
    const auto& t = ds.samples[0].bracket.exposure_times;
    CHECK(t == std::array<double, 3>{0.25, 1.0, 4.0});
    CHECK(ds.samples[0].bracket.gt_hdr.has_value());
    CHECK_FALSE(ds.samples[0].bracket.teacher_hdr.has_value());
    for (const auto& f : ds.opened_files) CHECK(f.filename() != "teacher.pfm");

    const auto kd = load_dataset(root, {.load_teacher = true, .teacher_dir = {}, .workers = 3});
    CHECK(kd.samples[0].bracket.teacher_hdr.has_value());
    CHECK_FALSE(kd.samples[1].bracket.teacher_hdr.has_value());
    CHECK(std::count_if(kd.opened_files.begin(), kd.opened_files.end(), [](const fs::path& f) { return f.filename() == "teacher.pfm"; }) == 1);
    CHECK(*kd.samples[1].bracket.gt_hdr == *ds.samples[1].bracket.gt_hdr);

    CHECK_THROWS_AS(load_dataset(fresh_dir("empty")), DatasetError);
    CHECK_THROWS_AS(load_dataset(root / "missing"), DatasetError);
}

TEST_CASE("training lowers the loss") {
    const ModelConfig m = toy_model();
    TrainConfig t = toy_train();
    t.patch_size = 16;
    t.batch_size = 1;
    t.epochs = 200;
    t.augment = false;
    const std::vector<SceneSample> data{{"s", synthetic_bracket(16, 16, 8)}};
    const auto r = train(data, build_model(m, 1), m, t);
    CHECK(r.steps == 200);
    CHECK(r.log.size() == 200);
    CHECK(r.step_losses.back() < r.step_losses.front());
    CHECK(r.step_losses.back() < 0.5 * r.step_losses.front());
}

TEST_CASE("training is reproducible and independent of worker count") {
    const ModelConfig m = toy_model();
    const auto dir = fresh_dir("repro");
    const std::vector<SceneSample> data{{"a", synthetic_bracket(32, 24, 1)}, {"b", synthetic_bracket(20, 40, 2)}};
    TrainConfig t = toy_train();
    t.loss_csv = dir / "a.csv";
    const auto r1 = train(data, build_model(m, 3), m, t);
    t.loss_csv = dir / "b.csv";
    t.workers = 3;
    const auto r2 = train(data, build_model(m, 3), m, t);
    CHECK(r1.log == r2.log);
    CHECK(r1.weights == r2.weights);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    CHECK(slurp(dir / "a.csv").starts_with("epoch,lr,train_loss\n0,"));

    t.seed = 6;
    const auto r3 = train(data, build_model(m, 3), m, t);
    CHECK_FALSE(r3.step_losses == r1.step_losses);
}

TEST_CASE("training stops on max_steps and callbacks, writes checkpoints") {
    const ModelConfig m = toy_model();
    const auto dir = fresh_dir("ckpt");
    const std::vector<SceneSample> data{{"a", synthetic_bracket(32, 32, 1)}};
    TrainConfig t = toy_train();
    t.checkpoint_every = 1;
    t.checkpoint_dir = dir;
    t.max_steps = 5;
    std::vector<std::int64_t> seen;
    TrainCallbacks cb;
    cb.on_step = [&](const StepInfo& s) {
        seen.push_back(s.step);
        return true;
    };
    const auto r = train(data, build_model(m, 3), m, t, cb);
    CHECK(r.steps == 5);
    CHECK(seen == std::vector<std::int64_t>{1, 2, 3, 4, 5});
    CHECK(r.log.size() == 3);
    CHECK(fs::exists(dir / "checkpoint_epoch_0001.cenh"));
    CHECK(fs::exists(dir / "checkpoint_epoch_0003.cenh"));
    CHECK(load_weights(dir / "checkpoint_epoch_0003.cenh").weights == r.weights);

    cb.on_step = [](const StepInfo& s) { return s.step < 2; };
    t.max_steps = 0;
    CHECK(train(data, build_model(m, 3), m, t, cb).steps == 2);
}

TEST_CASE("non-finite loss aborts naming the step") {
    const ModelConfig m = toy_model();
    auto w = build_model(m, 1);
    w.at("conv_D.bias").fill(std::numeric_limits<float>::quiet_NaN());
    const std::vector<SceneSample> data{{"a", synthetic_bracket(16, 16, 1)}};
    try {
        train(data, w, m, toy_train());
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.step() == 1);
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("kd training: step-1 loss equals an independent recomputation") {
    const ModelConfig m = toy_model();
    auto b = synthetic_bracket(16, 16, 9);
    b.teacher_hdr = random_tensor({1, 3, 16, 16}, 10, 0.0, 1.0);
    const std::vector<SceneSample> data{{"a", b}};
    TrainConfig t = toy_train();
    t.kd_enabled = true;
    t.batch_size = 1;
    double recomputed = -1.0, logged = -1.0;
    TrainCallbacks cb;
    cb.on_step = [&](const StepInfo& s) {
        const auto pred = forward(s.batch->inputs, *s.weights_before, m);
        recomputed = 0.2 * mu_l1(pred, s.batch->gt, t.mu) + 0.8 * mu_l1(pred, *s.batch->teacher, t.mu);
        logged = s.loss;
        return false;
    };
    const auto r = train(data, build_model(m, 2), m, t, cb);
    CHECK(std::abs(logged - recomputed) <= 1e-6);
    CHECK(r.log.front().train_loss == logged);

    t.kd_enabled = true;
    const std::vector<SceneSample> no_teacher{{"a", synthetic_bracket(16, 16, 9)}};
    CHECK_THROWS_AS(train(no_teacher, build_model(m, 2), m, t), ConfigError);
}
