#pragma once

// Image files <-> model tensors. Rasters are Tensor (1, 3, H, W), planar RGB.

#include <array>
#include <filesystem>
#include <optional>

#include "cenhdr/model.hpp"
#include "cenhdr/tensor.hpp"

namespace cenhdr {

inline constexpr double kDefaultGamma = 2.2;
inline constexpr double kDefaultMu = 5000.0;

/// Empty (1, 3, h, w) raster.
Tensor make_raster(std::int64_t height, std::int64_t width, float fill = 0.0f);
/// Throws DimensionError unless `t` is (1, 3, H, W).
void require_raster(const Tensor& t, const char* what);

/// I^gamma / t.
double gamma_project(double value, double exposure_time, double gamma = kDefaultGamma);
Tensor gamma_project(const Tensor& ldr, double exposure_time, double gamma = kDefaultGamma);

/// log(1 + mu x) / log(1 + mu). Negative inputs raise Error.
double mu_law(double value, double mu = kDefaultMu);
Tensor mu_law(const Tensor& hdr, double mu = kDefaultMu);

/// t_i = 2^EV_i. EVs must be finite and strictly increasing.
std::array<double, 3> exposure_times_from_ev(const std::array<double, 3>& ev);

struct ExposureBracket {
    std::array<Tensor, 3> ldr;
    std::array<double, 3> exposure_times{0.25, 1.0, 4.0};
    std::optional<Tensor> gt_hdr;
    std::optional<Tensor> teacher_hdr;

    /// Throws DimensionError on mismatched rasters, ConfigError on bad times.
    void validate() const;
    std::int64_t height() const { return ldr[1].shape().h; }
    std::int64_t width() const { return ldr[1].shape().w; }
};

struct AssembledInputs {
    std::array<Tensor, 3> inputs;  // (1, 6, H', W') with H', W' even
    std::int64_t height = 0;       // original size, for cropping
    std::int64_t width = 0;
};

/// Reflection-pads the bottom row / right column when H or W is odd.
Tensor pad_to_even(const Tensor& t);
/// Top-left (h, w) window of `t`.
Tensor crop(const Tensor& t, std::int64_t height, std::int64_t width);

/// L_i = concat(I_i, I_i^gamma / t_i), padded to even size.
AssembledInputs assemble_inputs(const ExposureBracket& bracket, double gamma = kDefaultGamma);

/// assemble -> forward -> crop. Output has the bracket's dimensions.
Tensor merge_bracket(const ExposureBracket& bracket, const ModelWeights& weights, const ModelConfig& config);

// File I/O. Format problems raise UnsupportedFormatError, CorruptHeaderError,
// DimensionOverflowError or FormatError (truncated data); missing files IoError.

inline constexpr std::int64_t kMaxImageSide = 1 << 15;

/// PNG or binary PPM (P6), 8 or 16 bit, normalized to [0, 1].
Tensor read_ldr(const std::filesystem::path& path);
void write_ppm(const Tensor& ldr, const std::filesystem::path& path, int bit_depth = 8);
/// 8-bit RGB PNG of round(255 * clamp(x, 0, 1)).
void write_png8(const Tensor& image, const std::filesystem::path& path);

/// PFM, little-endian, rows bottom-to-top.
void write_hdr(const Tensor& hdr, const std::filesystem::path& path);
Tensor read_hdr(const std::filesystem::path& path);

/// mu-law then round(255 T) as 8-bit PNG.
void write_tonemapped(const Tensor& hdr, const std::filesystem::path& path, double mu = kDefaultMu);

/// Three EV values, one per line.
std::array<double, 3> read_exposures(const std::filesystem::path& path);

}  // namespace cenhdr
