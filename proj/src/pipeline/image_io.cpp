#include <png.h>

#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cenhdr/pipeline.hpp"

namespace cenhdr {

namespace {

using Bytes = std::vector<unsigned char>;

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void check_dims(std::int64_t width, std::int64_t height, const std::string& where) {
    if (width < 1 || height < 1) throw CorruptHeaderError(where + ": zero image dimension " + std::to_string(width) + "x" + std::to_string(height));
    if (width > kMaxImageSide || height > kMaxImageSide)
        throw DimensionOverflowError(where + ": " + std::to_string(width) + "x" + std::to_string(height) + " exceeds the " + std::to_string(kMaxImageSide) +
                                     " pixel limit per side");
}

std::uint32_t be32(const unsigned char* p) { return std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[2]} << 8 | p[3]; }

// ---- PNG ----

constexpr unsigned char kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

struct PngSource {
    const Bytes* bytes;
    std::size_t pos;
};

struct PngFailure {
    char message[256];
};

void png_read_memory(png_structp png, png_bytep out, png_size_t n) {
    auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
    if (src->pos + n > src->bytes->size()) png_error(png, "unexpected end of file");
    std::memcpy(out, src->bytes->data() + src->pos, n);
    src->pos += n;
}

void png_on_error(png_structp png, png_const_charp msg) {
    auto* failure = static_cast<PngFailure*>(png_get_error_ptr(png));
    std::snprintf(failure->message, sizeof failure->message, "%s", msg);
    png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

struct DecodedPng {
    std::uint32_t width = 0, height = 0;
    int channels = 0, depth = 0;
    Bytes pixels;
};

// Returns false and fills `failure` when libpng reports an error.
bool decode_png(const Bytes& bytes, DecodedPng& out, PngFailure& failure) {
    PngSource src{&bytes, 0};
    std::vector<png_bytep> rows;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &failure, png_on_error, png_on_warning);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        return false;
    }
    png_set_read_fn(png, &src, png_read_memory);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.channels = png_get_channels(png, info);
    out.depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.pixels.resize(stride * out.height);
    rows.resize(out.height);
    for (std::uint32_t y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

Tensor read_png(const Bytes& bytes, const std::string& where) {
    // Validate IHDR ourselves so header problems get their own error type.
    if (bytes.size() < 33 || be32(&bytes[8]) != 13 || std::memcmp(&bytes[12], "IHDR", 4) != 0) throw CorruptHeaderError(where + ": missing or malformed IHDR chunk");
    const std::int64_t width = be32(&bytes[16]);
    const std::int64_t height = be32(&bytes[20]);
    const int depth = bytes[24];
    const int color = bytes[25];
    check_dims(width, height, where);
    const bool depth_ok = (color == 0 && (depth == 1 || depth == 2 || depth == 4 || depth == 8 || depth == 16)) ||
                          (color == 3 && (depth == 1 || depth == 2 || depth == 4 || depth == 8)) || ((color == 2 || color == 4 || color == 6) && (depth == 8 || depth == 16));
    if (!depth_ok) throw CorruptHeaderError(where + ": invalid bit depth " + std::to_string(depth) + " for color type " + std::to_string(color));

    DecodedPng png;
    PngFailure failure{};
    if (!decode_png(bytes, png, failure)) throw FormatError(where + ": corrupt PNG data: " + failure.message);

    Tensor out = make_raster(png.height, png.width);
    const double scale = png.depth == 16 ? 65535.0 : 255.0;
    const std::size_t bytes_per_sample = png.depth == 16 ? 2 : 1;
    const std::size_t stride = png.pixels.size() / png.height;
    for (std::uint32_t y = 0; y < png.height; ++y)
        for (std::uint32_t x = 0; x < png.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const unsigned char* p = png.pixels.data() + y * stride + (static_cast<std::size_t>(x) * png.channels + c) * bytes_per_sample;
                const unsigned v = bytes_per_sample == 2 ? (unsigned{p[0]} << 8 | p[1]) : p[0];
                out.at(0, c, y, x) = static_cast<float>(v / scale);
            }
    return out;
}

// ---- PPM / PFM headers ----

class HeaderReader {
public:
    HeaderReader(const Bytes& bytes, std::string where) : bytes_(bytes), where_(std::move(where)) {}

    std::string token() {
        skip_space_and_comments();
        std::string t;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && t.size() < 64) t.push_back(static_cast<char>(bytes_[pos_++]));
        if (t.empty()) throw CorruptHeaderError(where_ + ": header ends early");
        return t;
    }

    std::int64_t integer(const char* field) {
        const std::string t = token();
        std::int64_t v = 0;
        for (const char ch : t) {
            if (ch < '0' || ch > '9') throw CorruptHeaderError(where_ + ": " + field + " '" + t + "' is not a non-negative integer");
            if (v > (std::int64_t{1} << 40)) throw DimensionOverflowError(where_ + ": " + field + " '" + t + "' is too large");
            v = v * 10 + (ch - '0');
        }
        return v;
    }

    // Exactly one whitespace byte separates the header from the payload.
    std::size_t end_of_header() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw CorruptHeaderError(where_ + ": missing whitespace before pixel data");
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const Bytes& bytes_;
    std::string where_;
    std::size_t pos_ = 2;
};

Tensor read_ppm(const Bytes& bytes, const std::string& where) {
    HeaderReader header(bytes, where);
    const std::int64_t width = header.integer("width");
    const std::int64_t height = header.integer("height");
    const std::int64_t maxval = header.integer("maxval");
    check_dims(width, height, where);
    if (maxval < 1 || maxval > 65535) throw CorruptHeaderError(where + ": maxval " + std::to_string(maxval) + " outside 1..65535");
    const std::size_t start = header.end_of_header();
    const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
    const std::size_t needed = static_cast<std::size_t>(width * height * 3) * sample_bytes;
    if (bytes.size() - start < needed) throw FormatError(where + ": pixel data truncated (" + std::to_string(bytes.size() - start) + " of " + std::to_string(needed) + " bytes)");

    Tensor out = make_raster(height, width);
    const unsigned char* p = bytes.data() + start;
    for (std::int64_t y = 0; y < height; ++y)
        for (std::int64_t x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c, p += sample_bytes) {
                const unsigned v = sample_bytes == 2 ? (unsigned{p[0]} << 8 | p[1]) : p[0];
                if (static_cast<std::int64_t>(v) > maxval) throw FormatError(where + ": sample exceeds maxval");
                out.at(0, c, y, x) = static_cast<float>(v / static_cast<double>(maxval));
            }
    return out;
}

}  // namespace

Tensor read_ldr(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    const std::string where = path.string();
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) return read_png(bytes, where);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return read_ppm(bytes, where);
    throw UnsupportedFormatError(where + ": not a PNG or binary PPM (P6) file");
}

void write_ppm(const Tensor& ldr, const std::filesystem::path& path, int bit_depth) {
    require_raster(ldr, "write_ppm");
    if (bit_depth != 8 && bit_depth != 16) throw ConfigError("PPM bit depth must be 8 or 16");
    const Shape& s = ldr.shape();
    const unsigned maxval = bit_depth == 16 ? 65535 : 255;
    std::string out = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n" + std::to_string(maxval) + "\n";
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(static_cast<double>(ldr.at(0, c, y, x)), 0.0, 1.0);
                const auto q = static_cast<unsigned>(std::lround(v * maxval));
                if (bit_depth == 16) out.push_back(static_cast<char>(q >> 8));
                out.push_back(static_cast<char>(q & 0xFF));
            }
    write_file(path, out.data(), out.size());
}

void write_png8(const Tensor& image, const std::filesystem::path& path) {
    require_raster(image, "write_png8");
    const Shape& s = image.shape();
    Bytes pixels(static_cast<std::size_t>(s.h * s.w * 3));
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(static_cast<double>(image.at(0, c, y, x)), 0.0, 1.0);
                pixels[static_cast<std::size_t>((y * s.w + x) * 3 + c)] = static_cast<unsigned char>(std::lround(255.0 * v));
            }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(s.w);
    img.height = static_cast<png_uint_32>(s.h);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot write PNG '" + path.string() + "': " + msg);
    }
}

void write_hdr(const Tensor& hdr, const std::filesystem::path& path) {
    require_raster(hdr, "write_hdr");
    const Shape& s = hdr.shape();
    std::string out = "PF\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n-1.0\n";
    const std::size_t header = out.size();
    out.resize(header + static_cast<std::size_t>(s.h * s.w * 3) * 4);
    char* p = out.data() + header;
    for (std::int64_t row = s.h - 1; row >= 0; --row)
        for (std::int64_t x = 0; x < s.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const auto bits = std::bit_cast<std::uint32_t>(hdr.at(0, c, row, x));
                for (int b = 0; b < 4; ++b) *p++ = static_cast<char>((bits >> (8 * b)) & 0xFF);
            }
    write_file(path, out.data(), out.size());
}

Tensor read_hdr(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    const std::string where = path.string();
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != 'F' && bytes[1] != 'f')) throw UnsupportedFormatError(where + ": not a PFM file");
    const int channels = bytes[1] == 'F' ? 3 : 1;
    HeaderReader header(bytes, where);
    const std::int64_t width = header.integer("width");
    const std::int64_t height = header.integer("height");
    const std::string scale_text = header.token();
    double scale = 0.0;
    try {
        std::size_t used = 0;
        scale = std::stod(scale_text, &used);
        if (used != scale_text.size()) throw std::invalid_argument(scale_text);
    } catch (const std::exception&) {
        throw CorruptHeaderError(where + ": scale '" + scale_text + "' is not a number");
    }
    if (scale == 0.0 || !std::isfinite(scale)) throw CorruptHeaderError(where + ": scale must be non-zero");
    check_dims(width, height, where);
    const bool little = scale < 0.0;
    const std::size_t start = header.end_of_header();
    const std::size_t needed = static_cast<std::size_t>(width * height * channels) * 4;
    if (bytes.size() - start < needed) throw FormatError(where + ": pixel data truncated (" + std::to_string(bytes.size() - start) + " of " + std::to_string(needed) + " bytes)");

    Tensor out = make_raster(height, width);
    const unsigned char* p = bytes.data() + start;
    for (std::int64_t row = height - 1; row >= 0; --row)
        for (std::int64_t x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c, p += 4) {
                const std::uint32_t bits = little ? (std::uint32_t{p[3]} << 24 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[1]} << 8 | p[0]) : be32(p);
                const float v = std::bit_cast<float>(bits);
                if (channels == 3) {
                    out.at(0, c, row, x) = v;
                } else {
                    for (int k = 0; k < 3; ++k) out.at(0, k, row, x) = v;
                }
            }
    return out;
}

void write_tonemapped(const Tensor& hdr, const std::filesystem::path& path, double mu) { write_png8(mu_law(hdr, mu), path); }

std::array<double, 3> read_exposures(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::string token;
        if (!(fields >> token)) continue;
        try {
            std::size_t used = 0;
            values.push_back(std::stod(token, &used));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw DatasetError(path.string() + ": '" + token + "' is not an EV value");
        }
    }
    if (values.size() != 3) throw DatasetError(path.string() + ": expected 3 EV values, found " + std::to_string(values.size()));
    return {values[0], values[1], values[2]};
}

}  // namespace cenhdr
