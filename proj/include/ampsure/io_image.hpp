#ifndef AMPSURE_IO_IMAGE_HPP
#define AMPSURE_IO_IMAGE_HPP

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "ampsure/image.hpp"

namespace ampsure {

inline void write_pgm(const Image& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("write_pgm: cannot open " + path);
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            real v = img.at(r, c);
            v = v < 0 ? 0 : (v > 255 ? 255 : v);
            row[c] = static_cast<unsigned char>(std::lround(v));
        }
        os.write(reinterpret_cast<const char*>(row.data()), img.width);
    }
    if (!os) throw format_error("write_pgm: write failure on " + path);
}

namespace detail {

inline int pgm_token(std::istream& is) {
    // skips whitespace and '#' comments
    for (;;) {
        int ch = is.peek();
        if (ch == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(ch)) {
            is.get();
        } else {
            break;
        }
    }
    int v;
    if (!(is >> v)) throw format_error("pgm: malformed header");
    return v;
}

}  // namespace detail

inline Image read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("read_pgm: cannot open " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '5') throw format_error("read_pgm: not a binary P5 PGM: " + path);
    const int width = detail::pgm_token(is);
    const int height = detail::pgm_token(is);
    const int maxval = detail::pgm_token(is);
    if (maxval != 255) throw format_error("read_pgm: only 8-bit (maxval 255) PGM supported");
    is.get();  // single whitespace after maxval
    Image img(width, height);
    std::vector<unsigned char> row(width);
    for (int r = 0; r < height; ++r) {
        is.read(reinterpret_cast<char*>(row.data()), width);
        if (is.gcount() != width) throw format_error("read_pgm: truncated pixel data in " + path);
        for (int c = 0; c < width; ++c) img.at(r, c) = real(row[c]);
    }
    return img;
}

inline Image read_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw format_error("read_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw format_error("read_png: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw format_error("read_png: corrupt PNG: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const int width = int(png_get_image_width(png, info));
    const int height = int(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth != 8 || color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw format_error("read_png: only 8-bit grayscale PNG supported: " + path);
    }
    Image img(width, height);
    std::vector<unsigned char> row(width);
    for (int r = 0; r < height; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (int c = 0; c < width; ++c) img.at(r, c) = real(row[c]);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

/// 8-bit grayscale PGM (binary P5) or PNG; optional center crop.
inline Image ingest_image(const std::string& path, int crop_size = 0) {
    Image img;
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0)
        img = read_png(path);
    else if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".pgm") == 0)
        img = read_pgm(path);
    else
        throw format_error("ingest_image: unsupported format (need .pgm or .png): " + path);
    if (crop_size > 0) img = center_crop(img, crop_size);
    return img;
}

}  // namespace ampsure

#endif
