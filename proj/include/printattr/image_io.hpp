#pragma once

// PNG (via libpng) and binary/ASCII PNM readers and writers.

#include <png.h>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <variant>

#include "printattr/error.hpp"
#include "printattr/image.hpp"

namespace printattr {

using LoadedImage = std::variant<GrayImage, RgbImage>;

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

[[noreturn]] inline void png_error_fn(png_structp, png_const_charp msg) { throw IoError(std::string("libpng: ") + msg); }
inline void png_warning_fn(png_structp, png_const_charp) {}

inline LoadedImage read_png(const std::filesystem::path& path) {
    auto file = open_file(path, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError(path.string() + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const auto width = static_cast<int>(png_get_image_width(png, info));
    const auto height = static_cast<int>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    std::vector<png_byte> buf(static_cast<std::size_t>(width) * height * channels);
    std::vector<png_bytep> rows(height);
    for (int r = 0; r < height; ++r) rows[r] = buf.data() + static_cast<std::size_t>(r) * width * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    if (channels == 1) return GrayImage(height, width, std::vector<std::uint8_t>(buf.begin(), buf.end()));
    if (channels != 3) throw IoError(path.string() + ": unsupported channel layout");
    RgbImage rgb{GrayImage(height, width), GrayImage(height, width), GrayImage(height, width)};
    for (std::size_t i = 0; i < rgb.r.size(); ++i) {
        rgb.r.data()[i] = buf[3 * i];
        rgb.g.data()[i] = buf[3 * i + 1];
        rgb.b.data()[i] = buf[3 * i + 2];
    }
    return rgb;
}

inline std::string pnm_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

inline LoadedImage read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string magic = pnm_token(in);
    if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6")
        throw IoError(path.string() + ": unsupported PNM magic '" + magic + "'");
    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(pnm_token(in));
        height = std::stoi(pnm_token(in));
        maxval = std::stoi(pnm_token(in));
    } catch (const std::exception&) {
        throw IoError(path.string() + ": malformed PNM header");
    }
    if (width < 1 || height < 1 || maxval < 1 || maxval > 255)
        throw IoError(path.string() + ": unsupported PNM extents or depth");

    const bool color = magic == "P3" || magic == "P6";
    const bool ascii = magic == "P2" || magic == "P3";
    const std::size_t n = static_cast<std::size_t>(width) * height * (color ? 3 : 1);
    std::vector<std::uint8_t> buf(n);
    if (ascii) {
        for (auto& v : buf) {
            const auto tok = pnm_token(in);
            if (tok.empty()) throw IoError(path.string() + ": truncated PNM data");
            v = static_cast<std::uint8_t>(std::stoi(tok) * 255 / maxval);
        }
    } else {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) throw IoError(path.string() + ": truncated PNM data");
        if (maxval != 255)
            for (auto& v : buf) v = static_cast<std::uint8_t>(v * 255 / maxval);
    }
    if (!color) return GrayImage(height, width, std::move(buf));
    RgbImage rgb{GrayImage(height, width), GrayImage(height, width), GrayImage(height, width)};
    for (std::size_t i = 0; i < rgb.r.size(); ++i) {
        rgb.r.data()[i] = buf[3 * i];
        rgb.g.data()[i] = buf[3 * i + 1];
        rgb.b.data()[i] = buf[3 * i + 2];
    }
    return rgb;
}

}  // namespace detail

// Reads PNG, PGM or PPM; the format is chosen by file signature.
inline LoadedImage read_image(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open " + path.string());
    char head[2] = {};
    probe.read(head, 2);
    probe.close();
    if (head[0] == 'P' && head[1] >= '1' && head[1] <= '6') return detail::read_pnm(path);
    return detail::read_png(path);
}

// Loads any supported image as a grayscale document.
inline DocumentImage load_document(const std::filesystem::path& path, std::string source_id = {}) {
    auto img = read_image(path);
    if (auto* g = std::get_if<GrayImage>(&img)) return {std::move(*g), std::move(source_id)};
    return to_grayscale(std::get<RgbImage>(img), std::move(source_id));
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
    auto file = detail::open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn,
                                              detail::png_warning_fn);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};

    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols()), static_cast<png_uint_32>(img.rows()), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < img.rows(); ++r)
        png_write_row(png, const_cast<png_bytep>(img.data().data() + static_cast<std::size_t>(r) * img.cols()));
    png_write_end(png, nullptr);
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data().data()), static_cast<std::streamsize>(img.size()));
}

// Format picked from the extension (.pgm or anything else -> PNG).
inline void write_image(const std::filesystem::path& path, const GrayImage& img) {
    if (path.extension() == ".pgm")
        write_pgm(path, img);
    else
        write_png(path, img);
}

}  // namespace printattr
