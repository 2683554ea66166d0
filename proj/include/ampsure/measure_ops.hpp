#ifndef AMPSURE_MEASURE_OPS_HPP
#define AMPSURE_MEASURE_OPS_HPP

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <vector>

#include "ampsure/common.hpp"
#include "ampsure/fft.hpp"
#include "ampsure/image.hpp"

namespace ampsure {

enum class OpKind : std::uint8_t { GaussianDense = 0, CodedDiffraction = 1, RadialFourierMRI = 2 };
enum class ScalarField : std::uint8_t { Real = 0, Complex = 1 };

/// Measurement vector over the generating operator's scalar field.
/// For Real-field operators every imaginary part is exactly zero.
struct Measurement {
    ScalarField field = ScalarField::Real;
    std::vector<cplx> values;

    std::size_t size() const { return values.size(); }
};

/// Forward/adjoint pair (A, A^H). Immutable after construction; apply and
/// adjoint are safe for concurrent callers.
struct MeasurementOp {
    OpKind kind = OpKind::GaussianDense;
    int m = 0;
    int n = 0;
    ScalarField field = ScalarField::Real;
    std::uint64_t seed = 0;
    int width = 0;   // CDP / MRI grid
    int height = 0;
    real rate = 1.0;

    // payloads
    std::vector<real> dense;            // GaussianDense, row-major m x n
    std::vector<cplx> phase;            // CDP unit-modulus mask, length n
    std::vector<std::uint32_t> rows;    // CDP selected DFT bins (ascending) / MRI mask indices
};

// Memory bound for dense construction; seed regeneration kicks in above
// this entry count when the operator is written to disk.
inline constexpr std::size_t kDenseRegenThreshold = 10'000'000;
inline constexpr std::size_t kDenseMaxEntries = 200'000'000;

inline MeasurementOp make_gaussian_op(int m, int n, std::uint64_t seed) {
    if (m < 1 || n < 1) throw parameter_error("make_gaussian_op: m and n must be positive");
    const std::size_t entries = std::size_t(m) * std::size_t(n);
    if (entries > kDenseMaxEntries)
        throw parameter_error("make_gaussian_op: m*n exceeds configured memory bound");
    MeasurementOp op;
    op.kind = OpKind::GaussianDense;
    op.m = m;
    op.n = n;
    op.field = ScalarField::Real;
    op.seed = seed;
    op.dense.resize(entries);
    Rng rng(seed);
    const real sigma = 1.0 / std::sqrt(real(m));
    for (auto& a : op.dense) a = sigma * rng.normal();
    return op;
}

inline MeasurementOp make_cdp_op(int width, int height, real rate, std::uint64_t seed) {
    if (!(rate > 0.0 && rate <= 1.0)) throw parameter_error("make_cdp_op: rate must be in (0,1]");
    const std::size_t n = std::size_t(width) * std::size_t(height);
    const std::size_t m = std::size_t(rate * real(n));
    if (m < 1) throw parameter_error("make_cdp_op: rate*width*height must be at least 1");
    MeasurementOp op;
    op.kind = OpKind::CodedDiffraction;
    op.m = int(m);
    op.n = int(n);
    op.field = ScalarField::Complex;
    op.seed = seed;
    op.width = width;
    op.height = height;
    op.rate = rate;
    Rng rng(seed);
    op.phase.resize(n);
    for (auto& d : op.phase) {
        real a = 2.0 * 3.14159265358979323846 * rng.uniform();
        d = cplx(std::cos(a), std::sin(a));
    }
    // m bins chosen uniformly without replacement (partial Fisher-Yates),
    // stored ascending.
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t j = i + rng.index(n - i);
        std::swap(idx[i], idx[j]);
    }
    op.rows.assign(idx.begin(), idx.begin() + m);
    std::sort(op.rows.begin(), op.rows.end());
    return op;
}

namespace detail {

// Equi-angular spokes through the k-space center on a centered grid,
// returned as DFT-order linear indices (ascending). Center 3x3 always
// sampled.
inline std::vector<std::uint32_t> radial_mask_indices(int width, int height, int spokes,
                                                      real angle_offset) {
    std::vector<std::uint8_t> mask(std::size_t(width) * height, 0);
    const int cr = height / 2, cc = width / 2;
    const real rmax = 0.5 * std::hypot(real(width), real(height)) + 1.0;
    for (int s = 0; s < spokes; ++s) {
        const real theta = angle_offset + 3.14159265358979323846 * real(s) / real(spokes);
        const real dr = std::sin(theta), dc = std::cos(theta);
        for (real t = 0.0; t <= rmax; t += 0.5) {
            for (int sgn : {1, -1}) {
                int r = int(std::lround(cr + sgn * t * dr));
                int c = int(std::lround(cc + sgn * t * dc));
                if (r >= 0 && r < height && c >= 0 && c < width)
                    mask[std::size_t(r) * width + c] = 1;
            }
        }
    }
    for (int r = cr - 1; r <= cr + 1; ++r)
        for (int c = cc - 1; c <= cc + 1; ++c)
            if (r >= 0 && r < height && c >= 0 && c < width) mask[std::size_t(r) * width + c] = 1;
    std::vector<std::uint32_t> idx;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            if (mask[std::size_t(r) * width + c]) {
                int kr = (r - height / 2 + height) % height;
                int kc = (c - width / 2 + width) % width;
                idx.push_back(std::uint32_t(kr * width + kc));
            }
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace detail

inline MeasurementOp make_mri_op(int width, int height, real rate, std::uint64_t spokes_seed) {
    if (!(rate > 0.0 && rate <= 1.0)) throw parameter_error("make_mri_op: rate must be in (0,1]");
    const std::size_t n = std::size_t(width) * std::size_t(height);
    MeasurementOp op;
    op.kind = OpKind::RadialFourierMRI;
    op.n = int(n);
    op.field = ScalarField::Complex;
    op.seed = spokes_seed;
    op.width = width;
    op.height = height;
    op.rate = rate;
    if (rate == 1.0) {
        op.rows.resize(n);
        std::iota(op.rows.begin(), op.rows.end(), 0u);
        op.m = int(n);
        return op;
    }
    Rng rng(spokes_seed);
    const real offset = 3.14159265358979323846 * rng.uniform();
    const real tol = 0.01 * rate;
    const std::size_t target = std::size_t(std::lround(rate * real(n)));
    // largest spoke count whose mask stays at or under the target; remaining
    // points are filled with seeded uniform k-space samples so the sampled
    // fraction lands on the target exactly
    std::vector<std::uint32_t> chosen;
    const int max_spokes = 6 * std::max(width, height);
    for (int s = 1; s <= max_spokes; ++s) {
        auto idx = detail::radial_mask_indices(width, height, s, offset);
        if (idx.size() > target) {
            if (chosen.empty()) {
                const real frac = real(idx.size()) / real(n);
                if (std::abs(frac - rate) <= tol) chosen = std::move(idx);
            }
            break;
        }
        chosen = std::move(idx);
        if (chosen.size() == target) break;
    }
    if (chosen.empty()) {
        const real frac =
            real(detail::radial_mask_indices(width, height, 1, offset).size()) / real(n);
        char buf[128];
        std::snprintf(buf, sizeof buf,
                      "make_mri_op: cannot reach rate %.4f within 1%% (closest fraction %.4f)",
                      rate, frac);
        throw parameter_error(buf);
    }
    if (chosen.size() < target) {
        std::vector<std::uint8_t> mask(n, 0);
        for (auto i : chosen) mask[i] = 1;
        std::size_t need = target - chosen.size();
        while (need > 0) {
            std::uint32_t i = std::uint32_t(rng.index(n));
            if (!mask[i]) {
                mask[i] = 1;
                chosen.push_back(i);
                --need;
            }
        }
        std::sort(chosen.begin(), chosen.end());
    }
    op.rows = std::move(chosen);
    op.m = int(op.rows.size());
    return op;
}

inline Measurement apply(const MeasurementOp& op, const Image& x) {
    if (x.pixels.size() != std::size_t(op.n))
        throw shape_error("apply: image length does not match operator columns");
    Measurement y;
    y.field = op.field;
    switch (op.kind) {
        case OpKind::GaussianDense: {
            y.values.resize(op.m);
            for (int i = 0; i < op.m; ++i) {
                const real* row = op.dense.data() + std::size_t(i) * op.n;
                real s = 0;
                for (int j = 0; j < op.n; ++j) s += row[j] * x.pixels[j];
                y.values[i] = s;
            }
            break;
        }
        case OpKind::CodedDiffraction: {
            std::vector<cplx> t(op.n);
            for (int j = 0; j < op.n; ++j) t[j] = op.phase[j] * x.pixels[j];
            unitary_dft2(t, op.width, op.height);
            y.values.resize(op.m);
            for (int i = 0; i < op.m; ++i) y.values[i] = t[op.rows[i]];
            break;
        }
        case OpKind::RadialFourierMRI: {
            std::vector<cplx> t(x.pixels.begin(), x.pixels.end());
            unitary_dft2(t, op.width, op.height);
            y.values.resize(op.m);
            for (int i = 0; i < op.m; ++i) y.values[i] = t[op.rows[i]];
            break;
        }
    }
    return y;
}

/// A^H z; complex-valued for Fourier operators, imaginary parts zero for
/// GaussianDense.
inline std::vector<cplx> adjoint(const MeasurementOp& op, const Measurement& z) {
    if (z.size() != std::size_t(op.m))
        throw shape_error("adjoint: measurement length does not match operator rows");
    std::vector<cplx> out(op.n, cplx(0, 0));
    switch (op.kind) {
        case OpKind::GaussianDense: {
            std::vector<real> acc(op.n, 0.0);
            for (int i = 0; i < op.m; ++i) {
                const real* row = op.dense.data() + std::size_t(i) * op.n;
                const real zi = z.values[i].real();
                for (int j = 0; j < op.n; ++j) acc[j] += row[j] * zi;
            }
            for (int j = 0; j < op.n; ++j) out[j] = acc[j];
            break;
        }
        case OpKind::CodedDiffraction: {
            std::vector<cplx> t(op.n, cplx(0, 0));
            for (int i = 0; i < op.m; ++i) t[op.rows[i]] = z.values[i];
            unitary_idft2(t, op.width, op.height);
            for (int j = 0; j < op.n; ++j) out[j] = std::conj(op.phase[j]) * t[j];
            break;
        }
        case OpKind::RadialFourierMRI: {
            std::vector<cplx> t(op.n, cplx(0, 0));
            for (int i = 0; i < op.m; ++i) t[op.rows[i]] = z.values[i];
            unitary_idft2(t, op.width, op.height);
            out = std::move(t);
            break;
        }
    }
    return out;
}

inline std::vector<real> adjoint_real(const MeasurementOp& op, const Measurement& z) {
    auto a = adjoint(op, z);
    std::vector<real> out(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j].real();
    return out;
}

struct NoiseSpec {
    real sigma = 0.0;
    std::uint64_t seed = 0;
};

/// y = A x + eps. Complex field splits the variance equally across real and
/// imaginary parts so that E||eps||^2 / M = sigma^2 either way.
inline Measurement measure_with_noise(const MeasurementOp& op, const Image& x,
                                      const NoiseSpec& noise) {
    if (noise.sigma < 0) throw parameter_error("measure_with_noise: sigma must be nonnegative");
    Measurement y = apply(op, x);
    if (noise.sigma == 0.0) return y;
    Rng rng(noise.seed);
    if (op.field == ScalarField::Real) {
        for (auto& v : y.values) v += noise.sigma * rng.normal();
    } else {
        const real s = noise.sigma / std::sqrt(2.0);
        for (auto& v : y.values) v += cplx(s * rng.normal(), s * rng.normal());
    }
    return y;
}

// ---------------------------------------------------------------------------
// .ampop file format: magic "AMPOP", version byte, kind byte, field byte,
// u32 m/n/width/height, f64 rate, u64 seed, then the payload. Dense Gaussian
// payloads above kDenseRegenThreshold entries store only a regeneration flag.
// All multi-byte values little-endian.

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), std::streamsize(n));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
    write_bytes(os, &v, sizeof v);
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(is.gcount()) != n)
        throw format_error("ampop: truncated file, missing " +
                           std::to_string(n - std::size_t(is.gcount())) + " bytes");
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    read_bytes(is, &v, sizeof v);
    return v;
}

}  // namespace detail

inline void save_op(const MeasurementOp& op, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("save_op: cannot open " + path);
    os.write("AMPOP", 5);
    detail::write_pod<std::uint8_t>(os, 1);  // version
    detail::write_pod<std::uint8_t>(os, std::uint8_t(op.kind));
    detail::write_pod<std::uint8_t>(os, std::uint8_t(op.field));
    detail::write_pod<std::uint32_t>(os, std::uint32_t(op.m));
    detail::write_pod<std::uint32_t>(os, std::uint32_t(op.n));
    detail::write_pod<std::uint32_t>(os, std::uint32_t(op.width));
    detail::write_pod<std::uint32_t>(os, std::uint32_t(op.height));
    detail::write_pod<double>(os, op.rate);
    detail::write_pod<std::uint64_t>(os, op.seed);
    switch (op.kind) {
        case OpKind::GaussianDense: {
            const bool store = op.dense.size() <= kDenseRegenThreshold;
            detail::write_pod<std::uint8_t>(os, store ? 1 : 0);
            if (store)
                detail::write_bytes(os, op.dense.data(), op.dense.size() * sizeof(real));
            break;
        }
        case OpKind::CodedDiffraction: {
            // stored as re/im pairs so the round-trip is bit-identical
            detail::write_bytes(os, op.phase.data(), op.phase.size() * sizeof(cplx));
            detail::write_bytes(os, op.rows.data(), op.rows.size() * sizeof(std::uint32_t));
            break;
        }
        case OpKind::RadialFourierMRI: {
            detail::write_bytes(os, op.rows.data(), op.rows.size() * sizeof(std::uint32_t));
            break;
        }
    }
    if (!os) throw format_error("save_op: write failure on " + path);
}

inline MeasurementOp load_op(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("load_op: cannot open " + path);
    char magic[5];
    detail::read_bytes(is, magic, 5);
    if (std::memcmp(magic, "AMPOP", 5) != 0) throw format_error("load_op: bad magic bytes");
    const auto version = detail::read_pod<std::uint8_t>(is);
    if (version != 1)
        throw format_error("load_op: unsupported version " + std::to_string(version));
    MeasurementOp op;
    op.kind = OpKind(detail::read_pod<std::uint8_t>(is));
    op.field = ScalarField(detail::read_pod<std::uint8_t>(is));
    op.m = int(detail::read_pod<std::uint32_t>(is));
    op.n = int(detail::read_pod<std::uint32_t>(is));
    op.width = int(detail::read_pod<std::uint32_t>(is));
    op.height = int(detail::read_pod<std::uint32_t>(is));
    op.rate = detail::read_pod<double>(is);
    op.seed = detail::read_pod<std::uint64_t>(is);
    switch (op.kind) {
        case OpKind::GaussianDense: {
            const auto stored = detail::read_pod<std::uint8_t>(is);
            if (stored) {
                op.dense.resize(std::size_t(op.m) * op.n);
                detail::read_bytes(is, op.dense.data(), op.dense.size() * sizeof(real));
            } else {
                return make_gaussian_op(op.m, op.n, op.seed);
            }
            break;
        }
        case OpKind::CodedDiffraction: {
            op.phase.resize(op.n);
            detail::read_bytes(is, op.phase.data(), op.phase.size() * sizeof(cplx));
            op.rows.resize(op.m);
            detail::read_bytes(is, op.rows.data(), op.rows.size() * sizeof(std::uint32_t));
            break;
        }
        case OpKind::RadialFourierMRI: {
            op.rows.resize(op.m);
            detail::read_bytes(is, op.rows.data(), op.rows.size() * sizeof(std::uint32_t));
            break;
        }
        default:
            throw format_error("load_op: unknown operator kind");
    }
    return op;
}

}  // namespace ampsure

#endif
