#include "cenhdr/pipeline.hpp"

#include <cmath>

#include "cenhdr/kernels.hpp"

namespace cenhdr {

Tensor make_raster(std::int64_t height, std::int64_t width, float fill) { return Tensor({1, 3, height, width}, fill); }

void require_raster(const Tensor& t, const char* what) {
    const Shape& s = t.shape();
    if (s.n != 1) throw DimensionError(what, "batch", "expected a single image, got " + s.str());
    if (s.c != 3) throw DimensionError(what, "channels", "expected RGB, got " + s.str());
    if (s.h < 1 || s.w < 1) throw DimensionError(what, s.h < 1 ? "height" : "width", "empty image " + s.str());
}

double gamma_project(double value, double exposure_time, double gamma) {
    if (!(exposure_time > 0.0)) throw ConfigError("exposure time must be positive, got " + std::to_string(exposure_time));
    return std::pow(value, gamma) / exposure_time;
}

Tensor gamma_project(const Tensor& ldr, double exposure_time, double gamma) {
    if (!(exposure_time > 0.0)) throw ConfigError("exposure time must be positive, got " + std::to_string(exposure_time));
    Tensor out(ldr.shape());
    for (std::size_t i = 0; i < out.data().size(); ++i) out[i] = static_cast<float>(std::pow(static_cast<double>(ldr[i]), gamma) / exposure_time);
    return out;
}

double mu_law(double value, double mu) {
    if (value < 0.0) throw Error("mu_law: negative input " + std::to_string(value));
    return std::log1p(mu * value) / std::log1p(mu);
}

Tensor mu_law(const Tensor& hdr, double mu) {
    for (const float v : hdr.data())
        if (v < 0.0f) throw Error("mu_law: negative input " + std::to_string(v));
    return kernels::mu_law(hdr, mu);
}

std::array<double, 3> exposure_times_from_ev(const std::array<double, 3>& ev) {
    for (std::size_t i = 0; i < 3; ++i) {
        if (!std::isfinite(ev[i])) throw ConfigError("EV values must be finite");
        if (i > 0 && !(ev[i] > ev[i - 1])) throw ConfigError("EV values must be strictly increasing across frames");
    }
    return {std::exp2(ev[0]), std::exp2(ev[1]), std::exp2(ev[2])};
}

void ExposureBracket::validate() const {
    for (const auto& frame : ldr) {
        require_raster(frame, "bracket");
        if (frame.shape() != ldr[1].shape()) throw DimensionError("bracket", "frames", "LDR sizes differ: " + frame.shape().str() + " vs " + ldr[1].shape().str());
    }
    for (std::size_t i = 0; i < 3; ++i) {
        if (!(exposure_times[i] > 0.0) || !std::isfinite(exposure_times[i])) throw ConfigError("exposure times must be positive and finite");
        if (i > 0 && !(exposure_times[i] > exposure_times[i - 1])) throw ConfigError("exposure times must be strictly increasing");
    }
    if (gt_hdr && gt_hdr->shape() != ldr[1].shape()) throw DimensionError("bracket", "gt", "ground truth " + gt_hdr->shape().str() + " vs LDR " + ldr[1].shape().str());
    if (teacher_hdr && teacher_hdr->shape() != ldr[1].shape())
        throw DimensionError("bracket", "teacher", "teacher " + teacher_hdr->shape().str() + " vs LDR " + ldr[1].shape().str());
}

Tensor pad_to_even(const Tensor& t) {
    const Shape& s = t.shape();
    const std::int64_t h = s.h + (s.h % 2);
    const std::int64_t w = s.w + (s.w % 2);
    if (h == s.h && w == s.w) return t;
    // Reflection about the last row/column; a single row or column is repeated.
    auto reflect = [](std::int64_t i, std::int64_t n) { return i < n ? i : std::max<std::int64_t>(0, 2 * (n - 1) - i); };
    Tensor out({s.n, s.c, h, w});
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) out.at(n, c, y, x) = t.at(n, c, reflect(y, s.h), reflect(x, s.w));
    return out;
}

Tensor crop(const Tensor& t, std::int64_t height, std::int64_t width) {
    const Shape& s = t.shape();
    if (height > s.h || width > s.w || height < 1 || width < 1)
        throw DimensionError("crop", height > s.h || height < 1 ? "height" : "width", "cannot crop " + s.str() + " to " + std::to_string(height) + "x" + std::to_string(width));
    if (height == s.h && width == s.w) return t;
    Tensor out({s.n, s.c, height, width});
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < height; ++y)
                for (std::int64_t x = 0; x < width; ++x) out.at(n, c, y, x) = t.at(n, c, y, x);
    return out;
}

AssembledInputs assemble_inputs(const ExposureBracket& bracket, double gamma) {
    bracket.validate();
    AssembledInputs out;
    out.height = bracket.height();
    out.width = bracket.width();
    for (std::size_t i = 0; i < 3; ++i) {
        const Tensor& ldr = bracket.ldr[i];
        const Tensor projected = gamma_project(ldr, bracket.exposure_times[i], gamma);
        const Tensor* parts[] = {&ldr, &projected};
        out.inputs[i] = pad_to_even(kernels::concat_channels<float>(parts));
    }
    return out;
}

Tensor merge_bracket(const ExposureBracket& bracket, const ModelWeights& weights, const ModelConfig& config) {
    const auto assembled = assemble_inputs(bracket, config.gamma);
    return crop(forward(assembled.inputs, weights, config), assembled.height, assembled.width);
}

}  // namespace cenhdr
