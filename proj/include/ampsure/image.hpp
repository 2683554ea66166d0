#ifndef AMPSURE_IMAGE_HPP
#define AMPSURE_IMAGE_HPP

#include <vector>

#include "ampsure/common.hpp"

namespace ampsure {

/// Real-valued raster on the 0-255 intensity scale, stored row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<real> pixels;

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(std::size_t(w) * h, 0.0) {}
    Image(int w, int h, std::vector<real> px) : width(w), height(h), pixels(std::move(px)) {
        if (pixels.size() != std::size_t(w) * h)
            throw shape_error("Image: pixel count does not match dimensions");
    }

    std::size_t size() const { return pixels.size(); }
    real& at(int r, int c) { return pixels[std::size_t(r) * width + c]; }
    real at(int r, int c) const { return pixels[std::size_t(r) * width + c]; }
};

inline Image clamp_image(const Image& img, real lo = 0.0, real hi = 255.0) {
    Image out = img;
    for (auto& p : out.pixels) p = p < lo ? lo : (p > hi ? hi : p);
    return out;
}

inline Image center_crop(const Image& img, int size) {
    if (size > img.width || size > img.height)
        throw parameter_error("center_crop: crop size exceeds image dimensions");
    const int r0 = (img.height - size) / 2;
    const int c0 = (img.width - size) / 2;
    Image out(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) out.at(r, c) = img.at(r0 + r, c0 + c);
    return out;
}

// Piecewise-smooth test pattern: a few smooth bumps over flat regions.
// Used wherever a synthetic natural-image stand-in is needed.
inline Image synthetic_image(int width, int height, std::uint64_t seed) {
    Rng rng(seed);
    Image img(width, height);
    const real base = rng.uniform(40.0, 120.0);
    for (auto& p : img.pixels) p = base;
    // a flat rectangular region at a different level
    {
        int rw = width / 3 + int(rng.index(width / 3));
        int rh = height / 3 + int(rng.index(height / 3));
        int r0 = int(rng.index(height - rh));
        int c0 = int(rng.index(width - rw));
        real lvl = rng.uniform(80.0, 220.0);
        for (int r = r0; r < r0 + rh; ++r)
            for (int c = c0; c < c0 + rw; ++c) img.at(r, c) = lvl;
    }
    // smooth Gaussian bumps
    const int bumps = 3 + int(rng.index(3));
    for (int b = 0; b < bumps; ++b) {
        real cr = rng.uniform(0.0, height);
        real cc = rng.uniform(0.0, width);
        real amp = rng.uniform(-60.0, 90.0);
        real sig = rng.uniform(width * 0.08, width * 0.25);
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c) {
                real d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
                img.at(r, c) += amp * std::exp(-d2 / (2 * sig * sig));
            }
    }
    for (auto& p : img.pixels) p = p < 0 ? 0 : (p > 255 ? 255 : p);
    return img;
}

}  // namespace ampsure

#endif
