#include "cenhdr/training.hpp"

namespace cenhdr {

namespace {

// Mirror index without repeating the edge sample; period 2(n - 1).
std::int64_t mirror(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
}

Tensor crop_or_pad(const Tensor& t, PatchWindow window, std::int64_t patch) {
    const Shape& s = t.shape();
    Tensor out({s.n, s.c, patch, patch});
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < patch; ++y) {
                const std::int64_t sy = mirror(window.y + y, s.h);
                for (std::int64_t x = 0; x < patch; ++x) out.at(n, c, y, x) = t.at(n, c, sy, mirror(window.x + x, s.w));
            }
    return out;
}

}  // namespace

std::vector<std::int64_t> patch_origins(std::int64_t extent, std::int64_t patch, std::int64_t stride) {
    if (patch < 1 || stride < 1) throw ConfigError("patch size and stride must be positive");
    if (extent <= patch) return {0};
    std::vector<std::int64_t> origins;
    for (std::int64_t o = 0; o + patch <= extent; o += stride) origins.push_back(o);
    if (origins.back() + patch < extent) origins.push_back(extent - patch);
    return origins;
}

std::vector<PatchWindow> patch_windows(std::int64_t height, std::int64_t width, std::int64_t patch, std::int64_t stride) {
    std::vector<PatchWindow> windows;
    const auto ys = patch_origins(height, patch, stride);
    const auto xs = patch_origins(width, patch, stride);
    windows.reserve(ys.size() * xs.size());
    for (const auto y : ys)
        for (const auto x : xs) windows.push_back({y, x});
    return windows;
}

ExposureBracket crop_patch(const ExposureBracket& bracket, PatchWindow window, std::int64_t patch) {
    ExposureBracket out;
    for (int i = 0; i < 3; ++i) out.ldr[i] = crop_or_pad(bracket.ldr[i], window, patch);
    out.exposure_times = bracket.exposure_times;
    if (bracket.gt_hdr) out.gt_hdr = crop_or_pad(*bracket.gt_hdr, window, patch);
    if (bracket.teacher_hdr) out.teacher_hdr = crop_or_pad(*bracket.teacher_hdr, window, patch);
    return out;
}

std::vector<ExposureBracket> extract_patches(const ExposureBracket& bracket, std::int64_t patch, std::int64_t stride) {
    bracket.validate();
    std::vector<ExposureBracket> patches;
    for (const auto& w : patch_windows(bracket.height(), bracket.width(), patch, stride)) patches.push_back(crop_patch(bracket, w, patch));
    return patches;
}

Augmentation draw_augmentation(std::mt19937_64& rng) {
    const std::uint64_t bits = rng();
    return {static_cast<bool>(bits >> 63), static_cast<int>((bits >> 61) & 3)};
}

Tensor apply_augmentation(const Tensor& image, Augmentation a) {
    const Shape& s = image.shape();
    if (a.rotations % 2 != 0 && s.h != s.w) throw DimensionError("augment", "width", "quarter-turn rotation needs a square image, got " + s.str());
    const std::int64_t last = s.w - 1;
    Tensor out(s);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t x = 0; x < s.w; ++x) {
                    // Source coordinate after undoing the rotation, then the flip.
                    std::int64_t sy = y, sx = x;
                    switch (a.rotations & 3) {
                        case 1: sy = x, sx = last - y; break;
                        case 2: sy = s.h - 1 - y, sx = last - x; break;
                        case 3: sy = s.h - 1 - x, sx = y; break;
                        default: break;
                    }
                    if (a.flip) sx = last - sx;
                    out.at(n, c, y, x) = image.at(n, c, sy, sx);
                }
    return out;
}

ExposureBracket augment(const ExposureBracket& bracket, Augmentation a) {
    ExposureBracket out;
    for (int i = 0; i < 3; ++i) out.ldr[i] = apply_augmentation(bracket.ldr[i], a);
    out.exposure_times = bracket.exposure_times;
    if (bracket.gt_hdr) out.gt_hdr = apply_augmentation(*bracket.gt_hdr, a);
    if (bracket.teacher_hdr) out.teacher_hdr = apply_augmentation(*bracket.teacher_hdr, a);
    return out;
}

ExposureBracket augment(const ExposureBracket& bracket, std::mt19937_64& rng) { return augment(bracket, draw_augmentation(rng)); }

}  // namespace cenhdr
